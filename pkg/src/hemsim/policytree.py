"""Binary decision trees mapping observations to normalized actions.

Internal nodes compare one observation feature against a threshold (left
branch when feature < threshold); leaves hold an action value in [0, 1].
Trees serialize to an s-expression text form, ``(feature threshold left
right)`` with bare numbers as leaves, and export to DOT for figures.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

from hemsim.assets import SELF_CONSUMPTION, BessSetpoint, EvParams, HouseConfig

# Observation feature vector layout shared by trees and their training.
FEATURE_NAMES = (
    "load_kw",
    "pv_kw",
    "bess_soc",
    "ev_soc",
    "price",
    "hour",
    "weekday",
    "shifted_price",
)

# De-normalization ranges for thresholds encoded in [0,1].
DEFAULT_FEATURE_RANGES = (
    (0.0, 10.0),
    (0.0, 10.0),
    (0.0, 1.0),
    (0.0, 1.0),
    (-0.2, 0.6),
    (0.0, 24.0),
    (0.0, 7.0),
    (0.0, 0.5),
)

SELF_CONSUMPTION_BAND = 0.1


@dataclass
class Leaf:
    value: float


@dataclass
class Internal:
    feature: int
    threshold: float
    left: "Node"
    right: "Node"


Node = Union[Leaf, Internal]


@dataclass(frozen=True)
class PolicyPair:
    """One tree per controlled asset."""

    bess: Node
    ev: Node


def validate(node: Node, n_features: int = len(FEATURE_NAMES)) -> None:
    if isinstance(node, Leaf):
        if not 0.0 <= node.value <= 1.0:
            raise ValueError(f"leaf value {node.value} outside [0,1]")
        return
    if not 0 <= node.feature < n_features:
        raise ValueError(f"feature index {node.feature} out of range")
    validate(node.left, n_features)
    validate(node.right, n_features)


def tree_eval(node: Node, features: Sequence[float]) -> float:
    """Root-to-leaf descent; total for any valid tree."""
    while isinstance(node, Internal):
        node = node.left if features[node.feature] < node.threshold else node.right
    return node.value


def eval_leaf(node: Node, features: Sequence[float]) -> Leaf:
    """Like :func:`tree_eval` but returns the leaf object (usage counting)."""
    while isinstance(node, Internal):
        node = node.left if features[node.feature] < node.threshold else node.right
    return node


def iter_leaves(node: Node) -> list[Leaf]:
    if isinstance(node, Leaf):
        return [node]
    return iter_leaves(node.left) + iter_leaves(node.right)


def count_leaves(node: Node) -> int:
    return len(iter_leaves(node))


def collapse_leaf(root: Node, target: Leaf) -> Node:
    """A new tree where the target leaf's parent is replaced by its sibling."""
    if isinstance(root, Leaf):
        return root
    if root.left is target:
        return root.right
    if root.right is target:
        return root.left
    return Internal(
        root.feature,
        root.threshold,
        collapse_leaf(root.left, target),
        collapse_leaf(root.right, target),
    )


def tree_action_map(
    value: float, asset: str, cfg: HouseConfig, ev: EvParams
) -> BessSetpoint:
    """Denormalize a leaf value onto an asset setpoint.

    BESS: below the 0.1 band means self-consumption; the rest of the range
    maps linearly from full charge to full discharge. EV: plain linear map.
    """
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"action value {value} outside [0,1]")
    if asset == "bess":
        if value < SELF_CONSUMPTION_BAND:
            return SELF_CONSUMPTION
        span = cfg.bess_max_charge_kw + cfg.bess_max_discharge_kw
        u = (value - SELF_CONSUMPTION_BAND) / (1.0 - SELF_CONSUMPTION_BAND)
        return -cfg.bess_max_charge_kw + u * span
    if asset == "ev":
        return value * ev.p_max_kw
    raise ValueError(f"asset must be 'bess' or 'ev', got {asset!r}")


# -- text serialization ------------------------------------------------------


def to_sexpr(node: Node) -> str:
    if isinstance(node, Leaf):
        return repr(node.value)
    return (
        f"({node.feature} {node.threshold!r} "
        f"{to_sexpr(node.left)} {to_sexpr(node.right)})"
    )


def _tokenize(text: str) -> list[str]:
    return text.replace("(", " ( ").replace(")", " ) ").split()


def _parse_tokens(tokens: list[str], pos: int) -> tuple[Node, int]:
    tok = tokens[pos]
    if tok == "(":
        feature = int(tokens[pos + 1])
        threshold = float(tokens[pos + 2])
        left, pos = _parse_tokens(tokens, pos + 3)
        right, pos = _parse_tokens(tokens, pos)
        if tokens[pos] != ")":
            raise ValueError(f"expected ')' at token {pos}")
        return Internal(feature, threshold, left, right), pos + 1
    if tok == ")":
        raise ValueError(f"unexpected ')' at token {pos}")
    return Leaf(float(tok)), pos + 1


def parse_sexpr(text: str) -> Node:
    tokens = _tokenize(text)
    if not tokens:
        raise ValueError("empty tree text")
    try:
        node, pos = _parse_tokens(tokens, 0)
    except IndexError:
        raise ValueError("unbalanced tree expression") from None
    if pos != len(tokens):
        raise ValueError("trailing tokens after tree expression")
    validate(node)
    return node


def save_pair(path: str, pair: PolicyPair) -> None:
    with open(path, "w") as fh:
        fh.write("# policy trees: bess then ev, one s-expression per line\n")
        fh.write(to_sexpr(pair.bess) + "\n")
        fh.write(to_sexpr(pair.ev) + "\n")


def load_pair(path: str) -> PolicyPair:
    exprs = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                exprs.append(line)
    if len(exprs) != 2:
        raise ValueError(f"{path}: expected exactly two trees, found {len(exprs)}")
    return PolicyPair(parse_sexpr(exprs[0]), parse_sexpr(exprs[1]))


def to_dot(pair: PolicyPair) -> str:
    """Graphviz description of both trees (for figures)."""
    lines = ["digraph policy {", "  node [shape=box];"]
    counter = [0]

    def emit(node: Node, prefix: str) -> str:
        nid = f"{prefix}{counter[0]}"
        counter[0] += 1
        if isinstance(node, Leaf):
            lines.append(f'  {nid} [label="{node.value:.3f}", shape=ellipse];')
        else:
            name = FEATURE_NAMES[node.feature]
            lines.append(f'  {nid} [label="{name} < {node.threshold:.4g}"];')
            left = emit(node.left, prefix)
            right = emit(node.right, prefix)
            lines.append(f'  {nid} -> {left} [label="yes"];')
            lines.append(f'  {nid} -> {right} [label="no"];')
        return nid

    for name, tree in (("bess", pair.bess), ("ev", pair.ev)):
        lines.append(f'  subgraph cluster_{name} {{ label="{name}";')
        emit(tree, name)
        lines.append("  }")
    lines.append("}")
    return "\n".join(lines)
