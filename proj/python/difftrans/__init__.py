# Copyright 2026 The difftrans Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Difficulty-translation experiment core."""

from ._difftrans import (
    Error,
    MinTargetViolation,
    NotFoundError,
    ParseError,
    ValidationError,
    auc,
    gold_and_agreement,
    ks_p_value,
    ks_two_sample,
    paired_t_test_greater,
    percent_count,
    render_patch,
    run_experiment,
    stratum_counts,
    top5_mean,
    validate_config,
)

__version__ = "0.1.0"

__all__ = [
    "Error",
    "MinTargetViolation",
    "NotFoundError",
    "ParseError",
    "ValidationError",
    "auc",
    "gold_and_agreement",
    "ks_p_value",
    "ks_two_sample",
    "paired_t_test_greater",
    "percent_count",
    "render_patch",
    "run_experiment",
    "stratum_counts",
    "top5_mean",
    "validate_config",
]
