"""Control-flow analyses over a Function: reachability, (post-)dominators."""

from __future__ import annotations

from functools import lru_cache

from .types import Function


def cfg_shape(func: Function) -> tuple:
    """Hashable summary of the CFG (labels and successor lists)."""
    return tuple((b.label, tuple(b.successors())) for b in func.blocks)


def _succ_map(shape: tuple) -> dict[str, list[str]]:
    return {label: list(succ) for label, succ in shape}


def _pred_map(shape: tuple) -> dict[str, list[str]]:
    preds = {label: [] for label, _ in shape}
    for label, succ in shape:
        for s in succ:
            if s in preds:
                preds[s].append(label)
    return preds


def _reachable(start: str, edges: dict[str, list[str]]) -> list[str]:
    """Reverse postorder of the nodes reachable from ``start``."""
    seen, order = set(), []
    stack = [(start, iter(edges.get(start, ())))]
    seen.add(start)
    while stack:
        node, it = stack[-1]
        nxt = next(it, None)
        if nxt is None:
            stack.pop()
            order.append(node)
        elif nxt not in seen and nxt in edges:
            seen.add(nxt)
            stack.append((nxt, iter(edges.get(nxt, ()))))
    order.reverse()
    return order


def _idom(start: str, succ: dict, pred: dict) -> dict[str, str]:
    # Cooper, Harvey & Kennedy iterative algorithm
    rpo = _reachable(start, succ)
    index = {n: i for i, n in enumerate(rpo)}
    idom = {start: start}

    def intersect(a, b):
        while a != b:
            while index[a] > index[b]:
                a = idom[a]
            while index[b] > index[a]:
                b = idom[b]
        return a

    changed = True
    while changed:
        changed = False
        for n in rpo[1:]:
            ps = [p for p in pred[n] if p in idom]
            if not ps:
                continue
            new = ps[0]
            for p in ps[1:]:
                new = intersect(p, new)
            if idom.get(n) != new:
                idom[n] = new
                changed = True
    return idom


@lru_cache(maxsize=256)
def _dominators_cached(shape: tuple, entry: str) -> dict:
    return _idom(entry, _succ_map(shape), _pred_map(shape))


def immediate_dominators(func: Function) -> dict[str, str]:
    """Map block -> immediate dominator (entry maps to itself).

    Unreachable blocks are absent from the map.
    """
    return dict(_dominators_cached(cfg_shape(func), func.blocks[0].label))


@lru_cache(maxsize=256)
def _post_dominators_cached(shape: tuple, exit_label: str) -> dict:
    # post-dominators are dominators of the reversed graph rooted at the exit
    return _idom(exit_label, _pred_map(shape), _succ_map(shape))


def post_dominators(func: Function) -> dict[str, str]:
    """Map block -> immediate post-dominator; the exit block maps to itself."""
    exit_block = func.exit_block
    if exit_block is None:
        raise ValueError(f"@{func.name} does not have a single exit block")
    return dict(_post_dominators_cached(cfg_shape(func), exit_block.label))


def dominates(idom: dict[str, str], a: str, b: str) -> bool:
    """True when block ``a`` dominates block ``b`` (reflexive)."""
    if b not in idom:
        return False
    while True:
        if a == b:
            return True
        parent = idom[b]
        if parent == b:
            return False
        b = parent


def reachable_blocks(func: Function) -> set[str]:
    shape = cfg_shape(func)
    return set(_reachable(func.blocks[0].label, _succ_map(shape)))


def blocks_reaching(func: Function, target: str) -> set[str]:
    shape = cfg_shape(func)
    return set(_reachable(target, _pred_map(shape)))


def is_reducible(func: Function) -> bool:
    """Every cycle must be entered through a dominating header."""
    shape = cfg_shape(func)
    succ = _succ_map(shape)
    idom = immediate_dominators(func)
    forward = {n: [s for s in ss if not dominates(idom, s, n)] for n, ss in succ.items()}
    # the graph without back edges must be acyclic
    state = {}
    for root in succ:
        if root in state:
            continue
        stack = [(root, iter(forward[root]))]
        state[root] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                state[node] = 2
                stack.pop()
            elif state.get(nxt) == 1:
                return False
            elif nxt not in state:
                state[nxt] = 1
                stack.append((nxt, iter(forward[nxt])))
    return True
