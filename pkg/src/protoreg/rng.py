"""SplitMix64: the single seeded generator behind every random choice.

The state advances by the golden-ratio increment ``0x9E3779B97F4A7C15``
and each output is the state passed through the mix ``z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
z ^= z >> 27; z *= 0x94D049BB133111EB; z ^= z >> 31`` (all mod 2**64).
Floats take the top 53 bits. Being tiny and fully specified, it lets splits
and initializations be reproduced exactly from a seed in any language.
"""

_MASK = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed=0):
        if seed < 0:
            raise ValueError("seed must be a nonnegative integer")
        self.state = int(seed) & _MASK

    def next_u64(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def random(self):
        """Uniform float in [0, 1)."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randbelow(self, n):
        """Uniform integer in ``[0, n)``."""
        return min(int(self.random() * n), n - 1)

    def shuffle(self, items):
        """Fisher-Yates shuffle in place, walking from the last position down."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]
        return items
