r"""
jscc-lqg demo: analog spiral codes and an unstable plant controlled over AWGN.

  codec.spiral.stretch(0.5).rotation(4.0)  -> 1:2 stretched bi-spiral
  calibrate(...)                           -> unit power, CUBE factor, SDR0
  build_schedule + run_trials              -> closed-loop LQG cost
"""

import sys
sys.path.insert(0, "src")

from jscc_lqg import ChannelModel, RandomStreams, codec
from jscc_lqg.bounds import thm1_upper, thm2_lower
from jscc_lqg.control_loop import LqgWeights, PlantParams, build_schedule, run_trials
from jscc_lqg.csv_output import to_db
from jscc_lqg.sdr_lab import linear_sdr, measure_sdr, opta_sdr


def section(title: str) -> None:
    print(f"\n{'=' * 60}")
    print(f"  {title}")
    print(f"{'=' * 60}\n")


streams = RandomStreams(2024)


# ---------------------------------------------------------------------------
section("1. Codecs at 20 dB: linear repetition vs spirals vs OPTA")
# ---------------------------------------------------------------------------

ch = ChannelModel.from_db(20.0)
print(f"  {'codec':28s} {'SDR [dB]':>9s}")
print(f"  {'OPTA (1+SNR)^2 - 1':28s} {to_db(opta_sdr(ch.snr)):9.2f}")
print(f"  {'linear 2 SNR':28s} {to_db(linear_sdr(ch.snr)):9.2f}")
for i, (name, builder) in enumerate([
    ("repetition", codec.repetition),
    ("regular spiral, delta=2", codec.spiral.rotation(2.0)),
    ("stretched spiral, delta=4", codec.spiral.stretch(0.5).rotation(4.0)),
    ("stretched spiral, MMSE", codec.spiral.stretch(0.5).rotation(4.0).mmse),
]):
    spec = builder.calibrate(ch, 100_000, streams.stream("calibration", i))
    report = measure_sdr(spec, ch, 100_000, streams.stream("source", i))
    print(f"  {name:28s} {to_db(report.sdr_unbiased):9.2f}")


# ---------------------------------------------------------------------------
section("2. Threshold effect: a tightly wound spiral at 0 dB")
# ---------------------------------------------------------------------------

low = ChannelModel.from_db(0.0)
spec = codec.spiral.rotation(8.0).calibrate(low, 100_000, streams.stream("tight-calibration"))
report = measure_sdr(spec, low, 100_000, streams.stream("tight-source"))
print(f"  SDR {to_db(report.sdr_unbiased):.2f} dB vs linear {to_db(linear_sdr(low.snr)):.2f} dB")
print(f"  decodes on the wrong arm: {report.threshold_event_rate:.1%}")


# ---------------------------------------------------------------------------
section("3. Rate-matched loop: alpha=2 is stabilizable iff 1 + SNR > 4")
# ---------------------------------------------------------------------------

plant = PlantParams(alpha=2.0, w_var=1.0, v_var=1.0)
weights = LqgWeights(q=1.0, r=1.0, f=1.0, horizon=5_000)
for snr in (2.0, 4.0):
    link = ChannelModel(snr)
    spec = codec.linear.calibrate(link, 200_000, streams.stream("calibration", int(snr)))
    schedule = build_schedule(plant, weights, spec.loop_sdr, steady=True)
    summary = run_trials(plant, weights, spec, link, schedule, streams.stream("loop", int(snr)), trials=4)
    print(f"  SNR={snr}: simulated J={summary.mean_cost:.2f}, closed form {thm1_upper(plant, weights, snr):.2f}")


# ---------------------------------------------------------------------------
section("4. Fully observed plant, alpha=3: bounds sandwich")
# ---------------------------------------------------------------------------

plant = PlantParams(alpha=3.0, w_var=1.0, v_var=0.0)
weights = LqgWeights(q=1.0, r=0.0, f=1.0, horizon=5_000)
print(f"  {'SNR [dB]':>8s} {'lower':>8s} {'repetition':>11s} {'spiral':>8s}")
for snr_db in (8.0, 12.0, 16.0):
    link = ChannelModel.from_db(snr_db)
    spec = codec.spiral.stretch(0.5).rotation(4.0).bounded(1.2).calibrate(
        link, 100_000, streams.stream("calibration", int(snr_db))
    )
    print(
        f"  {snr_db:8.1f} {thm2_lower(plant, weights, link.snr):8.3f}"
        f" {thm1_upper(plant, weights, linear_sdr(link.snr)):11.3f}"
        f" {thm1_upper(plant, weights, spec.loop_sdr):8.3f}"
    )
