"""Shared fixtures; the synthetic builders live in synthdata."""

import pytest

from synthdata import make_chain_taxonomy, taxonomy_from_rows


@pytest.fixture
def tiny_taxonomy():
    return taxonomy_from_rows([
        "15000000-8,Food and beverages",
        "15800000-6,Miscellaneous food products",
        "15810000-9,Bread and pastry goods",
    ])


@pytest.fixture(scope="session")
def chain_taxonomy():
    return make_chain_taxonomy()
