import time

import pytest

from fsilab.exceptions import NumericalError
from fsilab.services.parallel import run_ordered


def test_results_keep_input_order():
    def slow_square(x):
        time.sleep(0.01 * (5 - x))
        return x * x

    assert run_ordered(slow_square, list(range(6)), max_workers=3) == [0, 1, 4, 9, 16, 25]


def test_empty_batch():
    assert run_ordered(lambda x: x, []) == []


def test_failure_fails_the_batch():
    def fragile(x):
        if x == 2:
            raise NumericalError("shift hit the spectrum", {"beta": 2.0})
        return x

    with pytest.raises(NumericalError) as info:
        run_ordered(fragile, [0, 1, 2, 3], max_workers=2)
    assert info.value.payload["first_index"] == 2
    assert info.value.payload["beta"] == 2.0
    assert info.value.payload["failed"] == 1


def test_foreign_errors_are_wrapped():
    def broken(x):
        raise ZeroDivisionError("boom")

    with pytest.raises(NumericalError) as info:
        run_ordered(broken, [1, 2])
    assert info.value.payload["failed"] == 2
    assert isinstance(info.value.__cause__, ZeroDivisionError)
