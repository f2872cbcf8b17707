"""Same data, same seed, trained with and without the semantic-map tokens."""
from liam.harness import TrainConfig, format_grid, map_ablation
from liam.worldgen import generate_split

train = generate_split("train", range(20), 3)
splits = {
    "seen": generate_split("seen", range(20), 1),
    "unseen": generate_split("unseen", range(1_000_000, 1_000_020), 1),
}
cfg = TrainConfig(optimizer="adam", lr=0.001, steps=150)
print(format_grid(map_ablation(cfg, train, splits)))
