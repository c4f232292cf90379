"""Pure-Python MT19937-64, bit-compatible with std::mt19937_64."""

MASK = (1 << 64) - 1
UPPER = 0xFFFFFFFF80000000
LOWER = 0x000000007FFFFFFF


class MT64:
    def __init__(self, seed):
        self.mt = [0] * 312
        self.mt[0] = seed & MASK
        for i in range(1, 312):
            prev = self.mt[i - 1]
            self.mt[i] = (6364136223846793005 * (prev ^ (prev >> 62)) + i) & MASK
        self.idx = 312

    def _twist(self):
        mt = self.mt
        for i in range(312):
            x = (mt[i] & UPPER) | (mt[(i + 1) % 312] & LOWER)
            xa = x >> 1
            if x & 1:
                xa ^= 0xB5026F5AA96619E9
            mt[i] = mt[(i + 156) % 312] ^ xa
        self.idx = 0

    def __call__(self):
        if self.idx >= 312:
            self._twist()
        y = self.mt[self.idx]
        self.idx += 1
        y ^= (y >> 29) & 0x5555555555555555
        y ^= (y << 17) & 0x71D67FFFEDA60000
        y ^= (y << 37) & 0xFFF7EEE000000000
        y ^= y >> 43
        return y & MASK


def uniform_below(rng, bound):
    limit = MASK - (MASK % bound)
    while True:
        x = rng()
        if x < limit:
            return x % bound


def split_70_30(n, seed):
    order = list(range(n))
    rng = MT64(seed)
    for i in range(n, 1, -1):
        j = uniform_below(rng, i)
        order[i - 1], order[j] = order[j], order[i - 1]
    t = (7 * n) // 10
    return order[:t], order[t:]


if __name__ == "__main__":
    # the standard requires the 10000th output of the default-seeded engine
    r = MT64(5489)
    for _ in range(9999):
        r()
    assert r() == 9981545732273789042
    print("mt19937_64 self-check ok")
