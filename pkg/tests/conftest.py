import datetime as dt
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from volwriter.synth import BsmQuotes, GeneratorConfig, generate  # noqa: E402


def small_config(**overrides) -> GeneratorConfig:
    """A short, cheap market: 60-minute sessions, 12 trading days, tight strike lattice."""
    base = dict(seed=7, n_days=12, s0=4000.0, session_length=60, strike_spacing=25.0,
                strike_span=0.08, vix_warmup_days=30,
                quote_model=BsmQuotes(iv_level=0.2, iv_vol_of_vol=0.5))
    base.update(overrides)
    return GeneratorConfig(**base)


@pytest.fixture(scope="session")
def small_store():
    return generate(small_config())


@pytest.fixture(scope="session")
def full_day_store():
    """Regular 390-minute sessions over two weeks."""
    return generate(GeneratorConfig(seed=3, n_days=10, start_date=dt.date(2019, 3, 4)))
