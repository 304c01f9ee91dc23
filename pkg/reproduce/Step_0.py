import os
import json
import argparse

from lightltv.base import GenConfig
from lightltv.data import describe_dataset, generate_synthetic, write_dataset


def generate_benchmark(output_directory, seeds, n_users, threads):
    os.makedirs(output_directory, exist_ok=True)

    for seed in seeds:
        dataset_dir = os.path.join(output_directory, f"synthetic_seed{seed}")
        print(f"Generating dataset for seed {seed} into {dataset_dir}")

        ds = generate_synthetic(GenConfig(n_users=n_users, seed=seed), threads=threads)
        write_dataset(ds, dataset_dir)

        stats = describe_dataset(ds).model_dump()
        print(
            f"There are {len(ds)} interactions, {stats['n_nonzero']} with spend > 0 "
            f"(zero fraction {stats['zero_fraction']:.4f}, median cost {stats['median_cost']})."
        )
        with open(os.path.join(dataset_dir, "dataset_stats.json"), "w", encoding="utf-8") as f:
            json.dump(stats, f, indent=4)

    print("All datasets have been generated.")


if __name__ == "__main__":
    parser = argparse.ArgumentParser()
    parser.add_argument("-o", "--output_dir", type=str, default="../datasets")
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--users", type=int, default=5000)
    parser.add_argument("--threads", type=int, default=4)

    args = parser.parse_args()

    generate_benchmark(args.output_dir, args.seeds, args.users, args.threads)
