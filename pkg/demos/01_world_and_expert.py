"""Build a room, plan an expert demonstration and look at what gets recorded."""
from liam.worldgen import ACTIONS, OBJECT_NAMES, generate_world, sample_episode
from liam.worldgen.world import HEADINGS


def draw(world):
    rows = []
    for y in range(world.height):
        row = ""
        for x in range(world.width):
            if (x, y) == (world.x, world.y):
                row += HEADINGS[world.heading]
            elif (x, y) in world.objects:
                row += "#"
            else:
                row += "."
        rows.append(row)
    return "\n".join(rows)


def main():
    world = generate_world(seed=4)
    print(draw(world))
    print("objects:", sorted(OBJECT_NAMES[o.cls] for o in world.objects.values()))

    ep = sample_episode(layout_seed=4, index=0, split="train")
    print("\ninstruction:", ep.instruction)
    print("task:", ep.task)
    for t, (a, obj) in enumerate(zip(ep.actions, ep.objects)):
        seen = int(ep.maps[t][1:].sum())
        print(f"{t:2d} {ACTIONS[a]:<16} label={OBJECT_NAMES[obj]:<14} map cells with objects: {seen}")
    print("frame vector length:", ep.frames.shape[1], " map shape:", ep.maps.shape[1:])


if __name__ == "__main__":
    main()
