"""Smallest possible walkthrough: six groups scattered around two lines."""

import numpy as np

from gmr import EmConfig, Group, GroupedDataset, fit


def main():
    rng = np.random.default_rng(0)
    groups = []
    for i in range(6):
        slope = 2.0 if i % 2 == 0 else -1.0
        x = rng.uniform(-3, 3, size=8)
        y = slope * x + rng.normal(scale=0.3, size=8)
        # single feature, no intercept column: both lines pass through zero
        groups.append(Group(f"g{i}", y, x[:, None]))
    data = GroupedDataset(tuple(groups))

    result = fit(data, EmConfig(K=2, seed=1))
    print(f"converged={result.converged} after {result.n_iter} iterations")
    print("mixing weights:", np.round(result.params.pi, 3))
    print("slopes found:", np.round(result.params.beta[0], 3), "(truth: 2 and -1)")
    print("noise sd found:", np.round(np.sqrt(result.params.sigma2), 3))
    for gid, row in zip(result.group_ids, result.tau.tau):
        print(f"  group {gid}: posterior {np.round(row, 3)}")


if __name__ == "__main__":
    main()
