"""Pair pretraining: frame-pair representations learn to pick out the action between them."""
from liam.harness import TrainConfig, PairPool, pretrain, zero_shot_chance
from liam.worldgen import generate_split


def main():
    train = generate_split("train", range(60), 4)
    held = generate_split("unseen", range(1_000_000, 1_000_060), 2)
    print(f"{len(train)} training episodes, {sum(e.n - 1 for e in train)} frame pairs")

    cfg = TrainConfig(stage="pair", optimizer="adam", lr=0.003, steps=150, eval_every=50, eval_pairs=1000)
    base = zero_shot_chance(cfg, PairPool.from_episodes(held), held)
    print(f"untrained: I2A {base['i2a_acc']:.3f}, chance {base['i2a_chance']:.3f}")

    result = pretrain(cfg, train, {"unseen": held})
    for row in result.history:
        if row["split"] == "unseen":
            print(f"step {row['step']:4d}  I2A {row['i2a_acc']:.3f}  tau {row['tau_ia']:.4f}")
    print(f"{result.seconds:.1f} s")


if __name__ == "__main__":
    main()
