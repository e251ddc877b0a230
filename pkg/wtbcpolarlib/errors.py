########################################################################
# Copyright (c) 2024 Contributors to the Eclipse Foundation
#
# See the NOTICE file(s) distributed with this work for additional
# information regarding copyright ownership.
#
# This program and the accompanying materials are made available under the
# terms of the Apache License 2.0 which is available at
# http://www.apache.org/licenses/LICENSE-2.0
#
# SPDX-License-Identifier: Apache-2.0
########################################################################

"""
Exception hierarchy shared by all wtbcpolarlib modules.

Every exception carries the process exit code that wtbcpolar.py returns
when it reaches the top level, and can render itself as a machine-readable
error record.
"""

from typing import Any, Dict, Optional

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3
EXIT_STATE_SPACE = 4


class WtbcError(Exception):
    """Base class, never raised directly"""

    exit_code = EXIT_VALIDATION

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_record(self) -> Dict[str, Any]:
        record: Dict[str, Any] = {
            "error": type(self).__name__,
            "message": self.message,
            "exit_code": self.exit_code,
        }
        if self.details:
            record["details"] = self.details
        return record


class ValidationError(WtbcError):
    exit_code = EXIT_VALIDATION


class NegativeProbability(ValidationError):
    pass


class RowSumError(ValidationError):
    pass


class NonDeterministicX(ValidationError):
    pass


class LengthNotPowerOfTwo(ValidationError):
    pass


class ZeroEvidence(ValidationError):
    """The conditioning event of an SC step has probability zero"""


class PlanMismatch(ValidationError):
    """Message, key or side information material disagrees with the code layout"""


class InfeasiblePlan(WtbcError):
    exit_code = EXIT_INFEASIBLE


class InadmissibleCombination(InfeasiblePlan):
    pass


class StateSpaceTooLarge(WtbcError):
    exit_code = EXIT_STATE_SPACE
