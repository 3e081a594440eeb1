"""Fusion of per-epoch affinity graphs by elementwise minimum.

Keeping the weakest link between two nodes preserves the change-indicating
information contributed by either epoch.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .graph import AffinityBlocks


def fuse(*graphs: AffinityBlocks) -> AffinityBlocks:
    """Elementwise minimum over two or more affinity graphs.

    All inputs must share the same sample set (identical block shapes).
    """
    if len(graphs) < 2:
        raise ConfigError("fusion needs at least two graphs")
    first = graphs[0]
    for g in graphs[1:]:
        if g.aa.shape != first.aa.shape or g.ab.shape != first.ab.shape:
            raise ConfigError(
                f"affinity shape mismatch: {g.aa.shape}/{g.ab.shape} vs "
                f"{first.aa.shape}/{first.ab.shape}"
            )
    aa = first.aa
    ab = first.ab
    for g in graphs[1:]:
        aa = np.minimum(aa, g.aa)
        ab = np.minimum(ab, g.ab)
    return AffinityBlocks(aa=aa, ab=ab)
