import enum
import json
import math

import numpy as np
import pydantic

from washboard.quad import CellGrid


def _serialize_float(value: float):
    if math.isfinite(value):
        return value
    return None


class WashboardEncoder(json.JSONEncoder):
    """Encoder for washboard objects"""

    def default(self, o):
        """Default encoder"""

        # this section is for pydantic basemodels
        if isinstance(o, pydantic.BaseModel):
            return o.model_dump(mode="json")

        if isinstance(o, CellGrid):
            return {
                "n": o.n,
                "offset": o.offset,
                "values": o.values.tolist(),
            }
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, np.bool_):
            return bool(o)
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return _serialize_float(float(o))
        if isinstance(o, enum.Enum):
            return o.value
        if isinstance(o, (set, frozenset)):
            return sorted(o)
        if isinstance(o, type):
            return o.__name__
        return json.JSONEncoder.default(self, o)
