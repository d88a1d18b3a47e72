"""Compare the closed-form priority waiting time with the discrete-event oracle.

    python3 demos/queue_oracle.py
"""

from vcps_sim.queueing import LITERAL, TEXTBOOK, SensingPlan, des_oracle, gamma_sampler, queuing_time

rates = [0.8, 0.6, 0.5]
means = [0.2, 0.3, 0.4]
varis = [0.01, 0.05, 0.08]
prios = [2, 1, 0]  # class 0 is served first

plan = SensingPlan((0, 1, 2), tuple(rates), tuple(prios), tuple(means), tuple(varis))
res = des_oracle(rates, prios, gamma_sampler(means, varis), n_jobs=300_000, seed=0)

print(f"utilization {sum(r * m for r, m in zip(rates, means)):.2f}")
print("class  textbook  simulated (se)   literal")
for k in range(3):
    t = queuing_time(plan, k, TEXTBOOK)
    lit = queuing_time(plan, k, LITERAL)
    print(f"{k:5d}  {t:8.4f}  {res.mean_wait[k]:8.4f} ({res.stderr[k]:.4f})  {lit:8.4f}")
