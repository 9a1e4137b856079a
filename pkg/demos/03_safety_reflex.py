"""Safety reflex under a scripted tension overload.

The ankle muscles are commanded to shorten far enough to build twice the
tension limit.  The reflex elongates the overloaded muscles toward
K_f * (f - f_lim), rate-limited to 0.5 mm per control tick, which caps
the peak tension well below the unprotected run.

Run:  python3 demos/03_safety_reflex.py
"""

from tendonctl.harness import run_safety_experiment


def main():
    without = run_safety_experiment(use_reflex=False)
    with_reflex = run_safety_experiment(use_reflex=True)

    print(f"peak tension without reflex : {without['peak_tension_N']:7.1f} N")
    print(f"peak tension with reflex    : {with_reflex['peak_tension_N']:7.1f} N")
    print(f"largest per-tick elongation : {with_reflex['max_dl_step_m'] * 1e3:.2f} mm"
          " (rate limit 0.50 mm)")
    print(f"final safety elongation     : {with_reflex['final_dl_safe_m'] * 1e3:.2f} mm")


if __name__ == "__main__":
    main()
