import argparse

from lightltv.base import ExperimentConfig, TrainConfig
from lightltv.evaluate import comparison_frame
from lightltv.lightltv import LightLTV


def compare_backbones(data_dir, working_dir, models, seeds, epochs, lr):
    config = ExperimentConfig(
        train=TrainConfig(epochs=epochs, lr=lr, batch_size=1024),
        data_dir=data_dir,
        models=models,
        seeds=seeds,
        output_dir=working_dir,
    )
    ltv = LightLTV(config=config)
    report = ltv.compare()

    print(comparison_frame(report).to_string(index=False, float_format="%.4f"))
    print(f"Best model: {report.best_model}, runner-up: {report.runner_up}, p={report.p_value}")


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("-i", "--input_dir", type=str, default="../datasets/synthetic_seed0")
    parser.add_argument("-o", "--output_dir", type=str, default="../compare")
    parser.add_argument("--models", type=str, nargs="+", default=["mf", "fm", "crossnet", "collab"])
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--epochs", type=int, default=10)
    parser.add_argument("--lr", type=float, default=1e-3)

    args = parser.parse_args()

    compare_backbones(args.input_dir, args.output_dir, args.models, args.seeds, args.epochs, args.lr)
