"""1-bit quantization and the infinite-resolution passthrough."""

import numpy as np

from .txchain import RfFrame


def one_bit(rf: RfFrame) -> RfFrame:
    # sign(0) = +1
    return RfFrame(np.where(rf.samples >= 0, 1.0, -1.0), stage="one_bit")


def passthrough(rf: RfFrame) -> RfFrame:
    return RfFrame(rf.samples, stage="infinite")


QUANTIZERS = {"one_bit": one_bit, "infinite": passthrough}
