"""Random agent demo: connect, reset, act until the episode ends.

Usage: python random_agent.py HOST:PORT [scene_id]
"""

import random
import sys

from capnav_client import EpisodeDoneError, connect


def random_action(rng):
    dirs = [float(rng.choice((-1.0, 0.0, 1.0))) for _ in range(5)]
    mags = [0.0 if d == 0.0 else round(rng.uniform(0.05, 1.0), 4) for d in dirs]
    return dirs + mags


def main():
    addr = sys.argv[1] if len(sys.argv) > 1 else "127.0.0.1:7780"
    rng = random.Random(0)
    with connect(addr) as client:
        scenes = client.list_scenes()
        scene_id = sys.argv[2] if len(sys.argv) > 2 else scenes[0]
        obs = client.reset(scene_id)
        print(f"reset {scene_id}: image {obs.image.shape}, step {obs.step_count}")
        while not obs.done:
            obs = client.step(random_action(rng))
            print(f"step {obs.step_count}: done={obs.done}")
        try:
            client.step(random_action(rng))
        except EpisodeDoneError as exc:
            print(f"stepping after done raises as expected: {exc.code}")
    print("episode complete")


if __name__ == "__main__":
    main()
