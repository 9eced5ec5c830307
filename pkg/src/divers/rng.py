import random


class CountingRandom(random.Random):
    """``random.Random`` that counts primitive draws (``random`` and ``getrandbits`` calls)."""

    def __init__(self, x=None):
        self.draws = 0
        super().__init__(x)

    def random(self):
        self.draws += 1
        return super().random()

    def getrandbits(self, k):
        self.draws += 1
        return super().getrandbits(k)


def derive(seed: int, stream: str) -> CountingRandom:
    """Independent, reproducible stream for one purpose of one seeded run."""
    return CountingRandom(f"{seed}:{stream}")
