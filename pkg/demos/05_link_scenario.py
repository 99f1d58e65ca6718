"""Coughing bits across a room.

On-off keying: a 1 is a strong release at the start of its symbol slot, a 0
is silence. The receiver counts aerosols per window and thresholds. The
channel response has a long tail, so short symbols smear into the next
window (inter-symbol interference), and a receiver whose windows are out of
step with the sender loses bits.
"""

import numpy as np

from breathlink import Impulse, MediumParams, SourceSpec
from breathlink.receiver import ReceiverSpec
from breathlink.scenarios import SymbolFrame, interference_sweep, isi_profile, mobility_track, run_scenario

H = 1.7


def main():
    med = MediumParams(1.0, 0.03)
    rx_pos = (1.0, 0.0, H)

    cough = SourceSpec(Impulse(40000.0), height_H=H)
    print("tail energy left after one symbol, receiver 1 m downwind:")
    for T in (0.5, 0.914, 1.5, 2.0, 3.0, 5.0):
        prof = isi_profile(cough, med, rx_pos, T)
        print(f"  T_sym={T:5.3f} s  tail={prof.tail_fraction:.3e}")
    prof = isi_profile(cough, med, rx_pos, 1.0)
    print(f"  peak arrival {prof.peak_time:.3f} s, delay spread {prof.delay_spread:.3f} s")

    bits = tuple(np.random.default_rng(1).integers(0, 2, 40).tolist())
    tx = [(SourceSpec(Impulse(1.0), height_H=H), SymbolFrame(bits, 5.0, Q=4e6))]
    rx = ReceiverSpec(position=rx_pos, window_T=5.0)
    for offset in (0.0, 1.0, 2.5):
        res = run_scenario(tx, med, rx, sync_offset=offset, seed=3, background=10.0)
        print(f"sync offset {offset:.1f} s: {res.bit_errors} errors in {len(bits)} bits"
              f" (lambda1={res.lambda1:.0f}, tau={res.threshold:.0f})")

    print("\na second cougher moving in from the side:")
    rx3 = ReceiverSpec(position=rx_pos, window_T=3.0)
    for row in interference_sweep(cough, [0.1, 0.3, 1.0, 3.0], med, rx3, background=1.0):
        print(f"  {row.separation:4.1f} m  lambda0={row.lambda0:8.2f}  p_fa={row.p_fa:.3f}  p_md={row.p_md:.2e}")

    times = np.linspace(0.0, 30.0, 3001)
    walk = mobility_track([(0.0, (0.0, 0.0)), (10.0, (-1.0, 0.0)), (20.0, (-2.0, 0.0))],
                          [(0.0, 40000.0), (10.0, 40000.0), (20.0, 40000.0)], med, rx_pos, times)
    peaks = [walk.values[(times >= a) & (times < a + 10)].max() for a in (0, 10, 20)]
    print("\nwalking away upwind, peak per cough:", ", ".join(f"{p:.1f}" for p in peaks))


if __name__ == "__main__":
    main()
