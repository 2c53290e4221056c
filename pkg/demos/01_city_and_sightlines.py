"""Generate a block city and probe which ground points an ABS can see.

Run:  python demos/01_city_and_sightlines.py
"""

import numpy as np

from absmove import generate_environment
from absmove.env import is_los, los_blocked_mask, obstructed_mask

SIDE = 500.0


def main() -> None:
    env = generate_environment(SIDE, SIDE, num_blocks=60, block_width=30.0,
                               height_range=(20.0, 85.0), seed=4)
    heights = np.array([b.height for b in env.blocks])
    print(f"city: {len(env.blocks)} blocks, heights {heights.min():.0f}-{heights.max():.0f} m,")
    footprint = len(env.blocks) * 30.0 ** 2 / SIDE ** 2
    print(f"      {footprint:.0%} of the ground covered by buildings\n")

    # One aerial vantage point versus a grid of ground points. Hover over
    # open ground so the straight-down ray has nothing to pierce.
    xs = np.linspace(10.0, SIDE - 10.0, 40)
    candidates = np.array([[x, y] for y in xs for x in xs])
    free = candidates[~obstructed_mask(env, candidates)]
    abs_pos = np.array([*free[len(free) // 2], 90.0])
    gus = np.array([[x, y, 1.0] for y in xs for x in xs])
    blocked = los_blocked_mask(env, abs_pos, gus)
    print(f"from ({abs_pos[0]:.0f}, {abs_pos[1]:.0f}) at {abs_pos[2]:.0f} m: "
          f"{blocked.mean():.1%} of {len(gus)} ground points are shadowed")

    below = np.array([abs_pos[0], abs_pos[1], 1.0])
    assert is_los(env, abs_pos, below)
    print("the point directly underneath is in sight\n")

    # Ground cells a building sits on cannot host a ground user at all.
    on_roof = obstructed_mask(env, candidates)
    print(f"{on_roof.mean():.1%} of the same grid lies inside a building footprint")

    # Coarse shadow map from that vantage point: '#' blocked, '.' clear.
    print("\nshadow map (rows south to north):")
    grid = np.where(blocked.reshape(40, 40), "#", ".")
    grid[on_roof.reshape(40, 40)] = "o"
    for row in grid[::4, ::2]:
        print("  " + "".join(row))


if __name__ == "__main__":
    main()
