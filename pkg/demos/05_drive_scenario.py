"""Integrated driving scenario with scripted recognition events.

The full stack drives at 5 km/h until a pedestrian is detected at t=8 s
(scripted stand-in for the recognition system): the controller latches
the brake and the car stops within half a second of pedal travel plus
actuation delay.  A blue light at t=14 s resumes tracking; a car horn at
t=24 s halts the car again for the rest of the run.

Run:  python3 demos/05_drive_scenario.py
"""

import os

import numpy as np

from tendonctl.dynamic_ctrl import OptimizerConfig
from tendonctl.harness import (Scenario, build_pedal_rig, run_scenario,
                               train_pedal_dynamics)

OUT = os.path.join(os.path.dirname(__file__), "output")
SEED = 0


def main():
    os.makedirs(OUT, exist_ok=True)
    print("training the pedal control stack ...")
    rig = build_pedal_rig(seed=SEED)
    model = rig.model

    def factory():
        return build_pedal_rig(seed=SEED, static_model=model)

    opt_cfg = OptimizerConfig(horizon=25)
    dynamics = train_pedal_dynamics(factory, seed=SEED, opt_cfg=opt_cfg)

    scenario = Scenario("drive_events", duration_s=30.0, v_ref=5.0,
                        events=[(8.0, "person_detected"),
                                (14.0, "light_blue"),
                                (24.0, "horn_detected")],
                        seed=SEED, controller="learned")
    report = run_scenario(scenario, factory(), dynamics,
                          opt_cfg=opt_cfg, out_dir=OUT)
    t, v, brake = report.trace

    stop = t[(t >= 8.0) & (v < 0.1)][0]
    resume_band = (t >= 14.0) & (np.abs(v - 5.0) <= 1.0)
    halt = t[(t >= 24.0) & (v < 0.1)][0]
    print(f"person detected at  8.0 s -> stopped at {stop:5.2f} s")
    print(f"blue light at      14.0 s -> back in the 20% band at "
          f"{t[resume_band][0]:5.2f} s")
    print(f"horn at            24.0 s -> stopped at {halt:5.2f} s")
    print(report.to_json())


if __name__ == "__main__":
    main()
