from dataclasses import dataclass, replace
from typing import Sequence

from common.exceptions import OracleError
from streams.config import Control


@dataclass(frozen=True)
class OracleState:
    current_task: Control | None = None
    increment_k: int = 1
    mirror_anchor: int = 0

    def apply(self, token: Control, t: int) -> "OracleState":
        """State after `token` has been taped at stream index t."""
        token = Control(token)
        if token is Control.INCREMENT:
            return OracleState(Control.INCREMENT, 1, self.mirror_anchor)
        if token is Control.ADDITION:
            return replace(self, current_task=Control.ADDITION)
        if token is Control.REVERSE:
            return replace(self, current_task=Control.REVERSE, mirror_anchor=t)
        # context token: meaning depends on the running task
        if self.current_task is None:
            raise OracleError(f"context token at index {t} before any task was established")
        if self.current_task is Control.INCREMENT:
            return replace(self, increment_k=self.increment_k + 1)
        if self.current_task is Control.REVERSE:
            return replace(self, mirror_anchor=t)
        return self


def oracle_next(
    state: OracleState,
    history: Sequence[int],
    t: int,
    taped: Control | None = None,
    *,
    n_symbols: int,
) -> tuple[int, OracleState]:
    """
    Ground-truth x_{t+1} given x_0..x_t.

    A token taped at t changes the state before the rule is applied, so it
    only affects symbols after position t.
    """
    if t < 0:
        raise OracleError(f"t must be >= 0, got {t}")
    if len(history) <= t:
        raise OracleError(f"history holds {len(history)} symbols, index {t} requested")
    if taped is not None:
        state = state.apply(taped, t)

    task = state.current_task
    if task is Control.INCREMENT:
        symbol = (history[t] + state.increment_k) % n_symbols
    elif task is Control.ADDITION:
        previous = history[t - 1] if t >= 1 else 0
        symbol = (history[t] + previous) % n_symbols
    elif task is Control.REVERSE:
        symbol = history[max(0, 2 * state.mirror_anchor - t)]
    else:
        raise OracleError(f"no task established at index {t}")
    return int(symbol), state


def replay(first_symbol: int, tape: Sequence[Control | None], n_symbols: int) -> list[int]:
    """Regenerate a whole symbol sequence from its first symbol and its tape."""
    symbols = [int(first_symbol)]
    state = OracleState()
    for t in range(len(tape) - 1):
        symbol, state = oracle_next(state, symbols, t, tape[t], n_symbols=n_symbols)
        symbols.append(symbol)
    return symbols
