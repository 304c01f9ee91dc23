import os
import json
import argparse

import numpy as np

from lightltv.base import ExperimentConfig, Scheme, TrainConfig
from lightltv.lightltv import LightLTV
from lightltv.standardize import label_dispersion


def scheme_ablation(data_dir, working_dir, model_type, seed, epochs, lr):
    results = []
    for scheme in Scheme:
        config = ExperimentConfig(
            train=TrainConfig(scheme=scheme, epochs=epochs, lr=lr, seed=seed),
            data_dir=data_dir,
            model_type=model_type,
            output_dir=os.path.join(working_dir, scheme.value),
        )
        ltv = LightLTV(config=config)
        run = ltv.run_training()
        report = ltv.evaluate(run.model, run.test, run.labeled.standardizer, seen=run.labeled.dataset)

        paid = run.labeled.dataset.spends > 0
        result = {
            "scheme": scheme.value,
            "label_dispersion": label_dispersion(run.labeled.targets[paid]),
            "hr@10": report.hr["10"],
            "ndcg@10": report.ndcg["10"],
            "r2": report.r2,
            "auc": report.auc,
            "final_loss": run.trace.points[-1].loss,
            "best_val_hr10": max((p.hr10 for p in run.trace.points if p.hr10 is not None), default=np.nan),
        }
        print(json.dumps(result))
        results.append(result)

    with open(os.path.join(working_dir, "scheme_ablation.json"), "w", encoding="utf-8") as f:
        json.dump(results, f, indent=4)


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("-i", "--input_dir", type=str, default="../datasets/synthetic_seed0")
    parser.add_argument("-o", "--output_dir", type=str, default="../ablation")
    parser.add_argument("--model", type=str, default="collab")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--epochs", type=int, default=10)
    parser.add_argument("--lr", type=float, default=1e-3)

    args = parser.parse_args()

    os.makedirs(args.output_dir, exist_ok=True)
    scheme_ablation(args.input_dir, args.output_dir, args.model, args.seed, args.epochs, args.lr)
