import numpy as np
import pytest

from fsilab.models.bench import BenchReport
from fsilab.services.bench_service import BenchService, generator_nbytes
from tests.conftest import analogue


@pytest.fixture(scope="module")
def bench_service():
    return BenchService()


def test_cached_and_naive_sweeps_agree(gen8, bench_service):
    betas = [0.0, 0.5, 3.0, 12.0]
    cached, factor_time, per_beta = bench_service.cached_sweep(gen8, betas)
    naive, naive_time = bench_service.naive_sweep(gen8, betas)
    assert np.allclose(cached, naive, rtol=1e-8)
    assert factor_time >= 0.0 and per_beta >= 0.0 and naive_time >= 0.0


def test_bench_needs_two_grids(bench_service):
    with pytest.raises(ValueError):
        bench_service.bench_sweep([analogue(4)], 0.0)


def test_bench_report(bench_service):
    report = bench_service.bench_sweep([analogue(4), analogue(2)], 0.0, betas=[0.0, 1.0])
    assert [r.n for r in report.records] == [4, 2]
    record = report.records[0]
    assert record.case_id == "analogue2d-n4-rho0"
    assert record.reduced_dim == 15
    assert record.n_betas == 2
    assert record.speedup > 0.0
    assert report.assembly_ratio == pytest.approx(record.assembly_time / report.records[1].assembly_time)
    assert BenchReport.model_validate_json(report.model_dump_json()) == report


def test_generator_nbytes_counts_dense_blocks(gen4):
    assert generator_nbytes(gen4) >= gen4.a_red.nbytes + gen4.basis.nbytes
