"""Minimum transmit power that meets the SNR target with the required reliability.

    python3 demos/power_floor.py
"""

from dataclasses import replace

from vcps_sim.channel import min_reliable_power, power_floor, reliability
from vcps_sim.domain import ChannelParams

p = ChannelParams()
print(f"SNR target {p.snr_target_db} dB, reliability {p.reliability}")
for dist in (50, 100, 200, 300, 400):
    pw = min_reliable_power(dist, p)
    print(f"{dist:4d} m: {1e3 * pw:9.4f} mW   (bound at floor: {reliability(pw, dist, p):.3f})")

strict = replace(p, reliability=0.95)
print(f"reliability 0.95 is infeasible for this fading law: floor = {power_floor(100, strict)}")
