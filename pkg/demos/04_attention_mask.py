"""What each token of the fused sequence may attend to."""
from liam.fusion import build_causal_mask, format_mask

m, n = 3, 3
for with_map in (True, False):
    mask = build_causal_mask(m, n, with_map=with_map)
    print("with map" if with_map else "without map")
    print(format_mask(mask, m, n, with_map=with_map))
    print()
