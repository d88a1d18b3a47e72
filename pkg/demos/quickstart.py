"""Build the desk scenario, run one random-action episode and print its scores.

    python3 demos/quickstart.py
"""

import numpy as np

from vcps_sim.domain import build_scenario, desk_config
from vcps_sim.env import VcpsEnv, random_policy, rollout


def main():
    sc = build_scenario(desk_config(time_slots=50))
    env = VcpsEnv(sc)
    print(f"{len(sc.rsus)} RSUs, {len(sc.vehicles)} vehicles, {len(sc.info_types)} info types, {len(sc.views)} views")
    print(f"obs_dim={env.obs_dim} act_dim={env.act_dim}")
    cr, rewards, rows = rollout(env, random_policy(env, seed=1), seed=0)
    aov = np.mean([s.aov for *_, s in rows])
    cov = np.mean([s.cov for *_, s in rows])
    print(f"random actions: CR={cr:.2f} over {len(rewards)} slots, mean AoV={aov:.3f}, mean CoV={cov:.3f}")


if __name__ == "__main__":
    main()
