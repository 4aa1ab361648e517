"""Sweep the CRP concentration and see how many clusters each run keeps.

Zero concentration never opens a new cluster and behaves exactly like the
continual-adaptation baseline. A huge concentration opens one per period.
Values in between depend on the sequence: clustering is greedy and
sequential, so the final count need not grow monotonically with the
concentration.

Outputs for each run land under ./sweep_out/concentration_<value>/.
"""

from llirl.harness import ExperimentConfig, format_table, sweep, sweep_configs

base = ExperimentConfig(env_type=1, n_periods=10, iterations=1, seed=0, out="sweep_out",
                        concentrations=[0.0, 0.5, 1.0, 2.0, 1e9])
rows = sweep(sweep_configs(base))
print(format_table(rows))
