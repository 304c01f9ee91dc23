import argparse

from lightltv.base import ExperimentConfig, TrainConfig
from lightltv.lightltv import LightLTV


def stability_table(data_dir, working_dir, models, seeds, mode, epochs, lr):
    config = ExperimentConfig(
        train=TrainConfig(epochs=epochs, lr=lr),
        data_dir=data_dir,
        seeds=seeds,
        stability_mode=mode,
        output_dir=working_dir,
    )
    ltv = LightLTV(config=config)

    print(f"{'model':<10}{'metric':<10}{'mean':>10}{'std':>10}{'cov':>10}")
    for model_type in models:
        summary = ltv.stability(model_type)
        for r in summary.reports:
            if r.metric not in ("hr@10", "ndcg@10", "r2", "auc"):
                continue
            cells = [f"{v:>10.5f}" if v is not None else f"{'-':>10}" for v in (r.mean, r.std, r.cov)]
            print(f"{model_type:<10}{r.metric:<10}{''.join(cells)}")


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("-i", "--input_dir", type=str, default="../datasets/synthetic_seed0")
    parser.add_argument("-o", "--output_dir", type=str, default="../stability")
    parser.add_argument("--models", type=str, nargs="+", default=["mf", "crossnet", "collab"])
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--mode", type=str, default="retrain", choices=["retrain", "daily"])
    parser.add_argument("--epochs", type=int, default=10)
    parser.add_argument("--lr", type=float, default=1e-3)

    args = parser.parse_args()

    stability_table(args.input_dir, args.output_dir, args.models, args.seeds, args.mode, args.epochs, args.lr)
