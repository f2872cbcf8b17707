"""Teacher-forced training on a handful of episodes, then open-loop rollout."""
from liam.harness import TrainConfig, evaluate_sequences, train_e2e
from liam.worldgen import generate_split


def main():
    eps = generate_split("train", range(8), 1)
    cfg = TrainConfig(stage="e2e", optimizer="adam", lr=0.001, steps=300, eval_every=25)
    result = train_e2e(cfg, eps, {"train": eps}, stop_when=lambda row: row["accuracy"] >= 0.99)
    for row in result.history:
        if row["split"] == "train" and "accuracy" in row:
            print(f"step {row['step']:4d}  accuracy {row['accuracy']:.3f}  macro-F1 {row['macro_f1']:.3f}")

    # feeding back its own predictions is harder than teacher forcing
    roll = evaluate_sequences(result.params, cfg, eps, mode="rollout")
    print(f"rollout accuracy {roll['accuracy']:.3f} over {roll['positions']} steps")


if __name__ == "__main__":
    main()
