"""From concentration to a yes/no decision.

A sampler breathing 1 L/s at 1 m downwind catches a fraction of the cough.
The expected count over a window is eta * intake * integral of C dt. With
background mean lambda0 and signal mean lambda1 the count is Poisson
either way, and a threshold tau trades false alarms for misses.
"""

import numpy as np

from breathlink import Impulse, MediumParams, SourceSpec
from breathlink.dispersion import receive_series
from breathlink.receiver import ReceiverSpec, detect, expected_captured, ml_threshold, roc_curve

H = 1.7


def main():
    med = MediumParams(1.0, 0.03)
    cough = SourceSpec(Impulse(40000.0), height_H=H)
    rx = ReceiverSpec(position=(1.0, 0.0, H), intake_rate=1e-3, efficiency=0.85, window_T=3.0)

    times = np.linspace(0.0, 3.0, 3001)
    series = receive_series([cough], med, rx.position, times)["virus"]
    lam = expected_captured(series, rx)
    print(f"expected capture over the first 3 s: {lam:.3f} aerosols")

    print("\ntextbook pair lambda0 = 2, lambda1 = 10:")
    for tau in (4, 5, 6, 8):
        r = detect(tau, 2.0, 10.0, tau=tau)
        print(f"  tau={tau}:  p_fa={r.p_fa:.5f}  p_md={r.p_md:.5f}")
    print(f"  maximum-likelihood threshold: {ml_threshold(2.0, 10.0)}")

    print("\nROC (p_fa, p_d), first ten thresholds:")
    for tau, (pfa, pd) in enumerate(roc_curve(2.0, 10.0)[:10]):
        print(f"  {tau:2d}  {pfa:.5f}  {pd:.5f}")

    r = detect(observation=9, lambda0=2.0, lambda1=10.0, target_pfa=0.02)
    print(f"\nNeyman-Pearson at p_fa <= 2%: tau={r.threshold:.0f}, 9 counts -> {r.decision}")


if __name__ == "__main__":
    main()
