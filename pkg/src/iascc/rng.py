"""Counter-based random substreams.

Every random draw in the simulator comes from a Philox4x64-10 generator
(numpy's ``Philox``) keyed by ``(seed, stream_id << 32 | trial_id)`` with the
counter starting at zero. Two substreams with different ``(stream_id,
trial_id)`` never share state, so results do not depend on execution order.
"""

import numpy as np

MASK64 = (1 << 64) - 1

# stream-id namespaces
TEXTURE = 1
SUBCHANNEL_NOISE = 1000
RECEIVER_NOISE = 100_000
TEST = 900_000


def substream(seed: int, stream_id: int = 0, trial_id: int = 0) -> np.random.Generator:
    if not 0 <= stream_id < (1 << 32) or not 0 <= trial_id < (1 << 32):
        raise ValueError("stream_id and trial_id must fit in 32 bits")
    key = np.array([seed & MASK64, (stream_id << 32) | trial_id], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
