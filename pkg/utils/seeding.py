import zlib
from typing import Union

import numpy as np

Key = Union[int, str]


def _as_int(key: Key) -> int:
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    if key < 0:
        raise ValueError(f"음수 시드 키는 허용되지 않습니다: {key}")
    return int(key)


def derive_rng(seed: int, *keys: Key) -> np.random.Generator:
    """(seed, *keys) 로부터 독립 난수 스트림을 만든다.

    개체별 스트림을 (seed, 세대, 인덱스, 용도) 로 고정하면 직렬/병렬 실행 순서와
    무관하게 같은 결과가 나온다.
    """
    entropy = [_as_int(seed)] + [_as_int(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))
