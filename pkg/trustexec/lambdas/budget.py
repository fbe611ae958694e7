"""
Per-POD differential-privacy budget ledger.
"""

import logging
import threading
from typing import Dict, Iterable, Optional

from ..exceptions import BudgetExhausted, InvalidPrivacyParams
from ..metrics import BUDGET_EXHAUSTIONS

logger = logging.getLogger(__name__)

# Absorbs float residue so charging exactly the remaining ε succeeds.
TOLERANCE = 1e-9


class BudgetLedger:
    """
    Remaining ε per POD under sequential composition.

    Charges are linearizable: either every listed POD is debited or none is.
    """

    def __init__(self, initial_budget: float, budgets: Optional[Dict[str, float]] = None):
        if initial_budget < 0:
            raise InvalidPrivacyParams("initial budget must be non-negative")
        self.initial_budget = initial_budget
        self._budgets: Dict[str, float] = dict(budgets or {})
        self._spent: Dict[str, float] = {}
        self._lock = threading.Lock()

    def remaining(self, pod_id: str) -> float:
        with self._lock:
            return self._remaining(pod_id)

    def _remaining(self, pod_id: str) -> float:
        return self._budgets.get(pod_id, self.initial_budget)

    def spent(self, pod_id: str) -> float:
        with self._lock:
            return self._spent.get(pod_id, 0.0)

    def charge(self, pods: Iterable[str], epsilon: float) -> None:
        if not epsilon > 0:
            raise InvalidPrivacyParams(f"epsilon must be positive, got {epsilon}")
        unique = list(dict.fromkeys(pods))
        with self._lock:
            short = [p for p in unique if self._remaining(p) + TOLERANCE < epsilon]
            if short:
                BUDGET_EXHAUSTIONS.inc()
                logger.warning(f"Budget exhausted for {len(short)} of {len(unique)} POD(s)")
                raise BudgetExhausted(short)
            for p in unique:
                self._budgets[p] = max(0.0, self._remaining(p) - epsilon)
                self._spent[p] = self._spent.get(p, 0.0) + epsilon
        logger.debug(f"Charged ε={epsilon} to {len(unique)} POD(s)")

    def snapshot(self) -> Dict[str, float]:
        with self._lock:
            return dict(self._budgets)
