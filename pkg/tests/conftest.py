from pathlib import Path

import pytest

from convgain.gateway import Gateway
from convgain.providers import (
    DeterministicChatProvider,
    HashEmbedder,
    HashLogprobProvider,
)
from convgain.transcripts import apply_skip_rules, load_episode

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def gateway():
    return Gateway(
        chat_providers={"chat": DeterministicChatProvider()},
        embedder=HashEmbedder(),
        logprob_provider=HashLogprobProvider(),
    )


@pytest.fixture(scope="session")
def fora_episode():
    return apply_skip_rules(load_episode(FIXTURES / "episodes" / "fora_demo.jsonl"))


@pytest.fixture(scope="session")
def insq_episode():
    return apply_skip_rules(load_episode(FIXTURES / "episodes" / "insq_demo.jsonl"))
