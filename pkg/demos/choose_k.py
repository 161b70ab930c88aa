"""Pick the number of clusters by repeated hold-out error."""

from gmr import EmConfig, SimConfig, generate, select_k


def main():
    data, truth = generate(
        SimConfig(n=300, K=3, p=2, G=6, sigma=2.0, delta_beta=10.0, seed=5)
    )
    report = select_k(
        data, [2, 3, 4, 5], cfg=EmConfig(K=1, n_restarts=5), n_reps=5, seed=9
    )
    print("true K = 3")
    print(f"{'K':>3} {'mean rmse':>10} {'sd':>7}")
    for k in sorted(report.rmse_by_k):
        label = {0: "mean", 1: "ols"}.get(k, "")
        print(f"{k:3d} {report.rmse_by_k[k]:10.3f} {report.sd_by_k[k]:7.3f}  {label}")
    print(f"best overall: {report.best_k}; best mixture: {report.best_mixture_k}")


if __name__ == "__main__":
    main()
