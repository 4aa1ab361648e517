"""Watch the cluster library grow while four goals come back in turn.

The goals sit at the corners of [0.2, 0.8]^2 and repeat every four periods.
One policy-gradient iteration per period is enough here: which cluster a
period lands in depends only on the exploration episodes, never on how long
the policy trains afterwards.
"""

from llirl import envs
from llirl.lifelong import LifelongConfig, run_llirl

corners = [(0.2, 0.2), (0.2, 0.8), (0.8, 0.2), (0.8, 0.8)]
seq = envs.generate_sequence(1, 12, seed=0, cycled=4, goals=corners)
result = run_llirl(seq, LifelongConfig(iterations=1, seed=0))

print("period  goal          cluster  new?  posterior")
for rec, cfg in zip(result.records, seq):
    post = " ".join(f"{p:.2f}" for p in rec.posterior)
    print(f"{rec.period:>6}  {cfg.goal!s:<12}  {rec.cluster:>7}  {'yes' if rec.expanded else '':<4}  {post}")

# each goal should map to one cluster from its second visit on
for k, goal in enumerate(corners):
    print(goal, "->", result.assignments[k::4])

lib = result.library
print(f"\n{lib.n_clusters} clusters, masses {[round(float(m), 2) for m in lib.masses]}")
