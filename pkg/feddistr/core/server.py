"""Server side: align uploaded parameters into parallel and orthogonal sets."""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
import pandas as pd

from .assignment import km_assign
from .client import DistributionParameter, UploadMessage
from ..exceptions import InputError
from ..utils.logging_config import get_logger

logger = get_logger(__name__)

Key = Tuple[int, int]


def pairwise_cost(a: Sequence[DistributionParameter], b: Sequence[DistributionParameter]) -> np.ndarray:
    """
    Euclidean distances between two parameter lists, +inf across labels.

    Args:
        a: Row parameters
        b: Column parameters

    Returns:
        Matrix of shape (len(a), len(b))
    """
    if not a or not b:
        raise InputError("pairwise_cost needs two nonempty parameter lists")
    left = np.stack([param.v for param in a]) if len({p.v.size for p in a}) == 1 else None
    right = np.stack([param.v for param in b]) if len({p.v.size for p in b}) == 1 else None
    if left is None or right is None or left.shape[1] != right.shape[1]:
        raise InputError("Parameter vectors differ in dimension")

    cost = np.linalg.norm(left[:, None, :] - right[None, :, :], axis=2)
    label_a = np.array([param.label for param in a])
    label_b = np.array([param.label for param in b])
    cost[label_a[:, None] != label_b[None, :]] = np.inf
    return cost


@dataclass
class ParameterGroup:
    """Uploaded parameters judged to describe one base distribution."""

    members: List[DistributionParameter] = field(default_factory=list)

    @property
    def dominant(self) -> DistributionParameter:
        """Largest count; ties go to the lowest client id, then lowest local index."""
        return min(self.members, key=lambda p: (-p.count, p.owner, p.local_index))

    @property
    def keys(self) -> Set[Key]:
        return {param.key for param in self.members}

    @property
    def total_count(self) -> int:
        return sum(param.count for param in self.members)

    @property
    def is_parallel(self) -> bool:
        return len(self.members) >= 2


@dataclass
class AlignmentResult:
    """Partition of all uploads into parallel groups and orthogonal ones."""

    groups: List[ParameterGroup]
    tau: float

    @property
    def parallel(self) -> List[ParameterGroup]:
        return [group for group in self.groups if group.is_parallel]

    @property
    def parallel_groups(self) -> List[Set[Key]]:
        return [group.keys for group in self.parallel]

    @property
    def orthogonal(self) -> List[Key]:
        return [group.members[0].key for group in self.groups if not group.is_parallel]

    @property
    def dominants(self) -> List[Key]:
        return [group.dominant.key for group in self.parallel]

    def _payload_groups(self) -> List[ParameterGroup]:
        return self.parallel + [group for group in self.groups if not group.is_parallel]

    @property
    def payload(self) -> List[DistributionParameter]:
        """One dominant per parallel group, then every orthogonal parameter."""
        return [group.dominant for group in self._payload_groups()]

    @property
    def payload_counts(self) -> List[int]:
        """Aggregated data counts aligned with :attr:`payload`."""
        return [group.total_count for group in self._payload_groups()]

    def to_frame(self) -> pd.DataFrame:
        """Rows of group_id, client_id, local_index, label, dominant, count, distance_to_dominant."""
        rows = []
        for group_id, group in enumerate(self._payload_groups()):
            dominant = group.dominant
            for param in sorted(group.members, key=lambda p: p.key):
                rows.append({
                    "group_id": group_id,
                    "parallel": int(group.is_parallel),
                    "client_id": param.owner,
                    "local_index": param.local_index,
                    "label": param.label,
                    "dominant": int(param.key == dominant.key),
                    "count": param.count,
                    "distance_to_dominant": float(np.linalg.norm(param.v - dominant.v)),
                })
        return pd.DataFrame(rows)


def default_tau(params: Sequence[DistributionParameter]) -> float:
    """Half the median distance among all label-compatible parameter pairs (0 if none)."""
    distances = []
    for i in range(len(params)):
        for j in range(i + 1, len(params)):
            if params[i].label == params[j].label:
                distances.append(float(np.linalg.norm(params[i].v - params[j].v)))
    if not distances:
        return 0.0
    return 0.5 * float(np.median(distances))


def align(uploads: Sequence[UploadMessage], tau: Optional[float] = None) -> AlignmentResult:
    """
    Merge uploads into groups by sequential KM matching against a growing pool.

    Clients are processed in id order. Each new client's parameters are
    matched to the current group dominants; matched pairs within ``tau`` join
    the group, everything else opens a new group.

    Args:
        uploads: One UploadMessage per client
        tau: Merge threshold; defaults to :func:`default_tau`

    Returns:
        AlignmentResult
    """
    if not uploads:
        raise InputError("align needs at least one upload")
    ordered = sorted(uploads, key=lambda message: message.owner)
    all_params = [param for message in ordered for param in message.params]
    if len({param.v.size for param in all_params}) > 1:
        raise InputError("Uploaded parameter vectors differ in dimension across clients")
    if tau is None:
        tau = default_tau(all_params)
    logger.info(f"Aligning {len(all_params)} parameters from {len(ordered)} clients (tau={tau:.4f})")

    groups: List[ParameterGroup] = []
    for message in ordered:
        if not message.params:
            continue
        if not groups:
            groups.extend(ParameterGroup(members=[param]) for param in message.params)
            continue

        representatives = [group.dominant for group in groups]
        cost = pairwise_cost(representatives, message.params)
        matched: Dict[int, int] = {}
        for group_index, param_index in km_assign(cost).pairs:
            if cost[group_index, param_index] <= tau:
                matched[param_index] = group_index

        opened = []
        for param_index, param in enumerate(message.params):
            if param_index in matched:
                groups[matched[param_index]].members.append(param)
            else:
                opened.append(ParameterGroup(members=[param]))
        groups.extend(opened)
        logger.debug(f"Client {message.owner}: {len(matched)} merged, {len(opened)} new groups")

    result = AlignmentResult(groups=groups, tau=tau)
    logger.info(
        f"Alignment: {len(result.parallel)} parallel groups, {len(result.orthogonal)} orthogonal, "
        f"payload {len(result.payload)}"
    )
    return result


def broadcast(result: AlignmentResult) -> List[DistributionParameter]:
    """The single downlink: the aligned payload."""
    return result.payload
