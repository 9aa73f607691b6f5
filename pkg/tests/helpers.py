"""Builders shared by several test modules."""

import numpy as np

from feddistr.core.client import DistributionParameter, UploadMessage


def make_param(vector, label=0, count=10, owner=0, local_index=0) -> DistributionParameter:
    return DistributionParameter(
        v=np.asarray(vector, dtype=float), label=label, count=count, owner=owner, local_index=local_index
    )


def make_upload(owner, params, clip_bound=50.0, noise_sigma=0.0) -> UploadMessage:
    return UploadMessage(owner=owner, params=list(params), clip_bound=clip_bound, noise_sigma=noise_sigma)
