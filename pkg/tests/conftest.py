import pytest
import torch


@pytest.fixture(autouse=True)
def _fixed_global_seed():
    # Tests that construct unseeded modules still get reproducible weights.
    torch.manual_seed(1234)
    yield


def parameters_snapshot(module: torch.nn.Module) -> list[torch.Tensor]:
    return [p.detach().clone() for p in module.parameters()]


def parameters_bitwise_equal(module: torch.nn.Module, snapshot) -> bool:
    return all(torch.equal(p.detach(), s) for p, s in zip(module.parameters(), snapshot))
