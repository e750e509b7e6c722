"""Structure-preserving bracket dynamics on graphs."""
import os

# the legacy CPU runtime is roughly twice as fast on long scans of tiny ops
if "xla_cpu_use_thunk_runtime" not in os.environ.get("XLA_FLAGS", ""):
    os.environ["XLA_FLAGS"] = (os.environ.get("XLA_FLAGS", "") + " --xla_cpu_use_thunk_runtime=false").strip()

import jax  # noqa: E402

# the structural identities are checked at 1e-12; float32 cannot resolve them
jax.config.update("jax_enable_x64", True)

from .topology import CliqueComplex, Cochain, build_complex  # noqa: E402
from .attention import MetricPair, PreAttentionConfig, build_metric  # noqa: E402
from .brackets import BracketSystem, State  # noqa: E402

__version__ = "0.1.0"
