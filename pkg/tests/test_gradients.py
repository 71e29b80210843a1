"""Every corpus model: rev-AD, fwd-AD and central differences against the closed forms."""
import math

import pytest

from common.models import Backend
from difflang.bench import GradientBackends, op_counts, scaling_wrt
from difflang.evaluator import EvalStats, Interpreter
from difflang.lang.nodes import Program
from difflang.lang.parser import parse
from difflang.models import MODEL_NAMES, get_model, load_function, reference_gradient, relative_close, sample_points
from difflang.reverse_mode import GradRequest, evaluate_gradient, gradient

POINTS = 100
AD_TOL = 1e-12
FD_TOL = 1e-5
FD_EPS = 1e-6

# Fixed cost allowed on top of the per-op factors; covers adjoint declarations,
# the seed and the final `_result` writes.
OP_SLACK = 100


@pytest.mark.parametrize("model", list(MODEL_NAMES) + ["gaus_mix2"])
def test_backends_agree_with_reference(model):
    entry = get_model(model)
    wrt = entry.array_params + entry.scalar_params
    backends = GradientBackends(load_function(model), wrt, eps=FD_EPS)
    for point in sample_points(entry, POINTS, seed=0):
        reference = reference_gradient(model, point, wrt)
        rev = backends.build(Backend.REV_AD, point)(EvalStats())
        fwd = backends.build(Backend.FWD_AD, point)(EvalStats())
        nd = backends.build(Backend.ND, point)(EvalStats())
        assert len(rev) == len(fwd) == len(nd) == len(reference)
        for r, f, n, ref in zip(rev, fwd, nd, reference):
            assert relative_close(r, ref, AD_TOL), (point, r, ref)
            assert relative_close(f, ref, AD_TOL), (point, f, ref)
            assert relative_close(n, ref, FD_TOL), (point, n, ref)


class TestCostFactors:

    @pytest.mark.parametrize("dim", [5, 512, 4096])
    @pytest.mark.parametrize("model", ["sum", "mvn"])
    def test_array_models(self, model, dim):
        counts = op_counts(model, dim, scaling_wrt(get_model(model)))
        original = counts["original"].total_ops
        assert counts["forward"].total_ops <= 3 * original + OP_SLACK
        assert counts["reverse"].total_ops <= 4 * original + OP_SLACK

    @pytest.mark.parametrize("model", ["breitwigner_pdf", "gaus", "expo", "gaus_mix3", "gaus_mix10"])
    def test_scalar_models(self, model):
        counts = op_counts(model, 1)
        original = counts["original"].total_ops
        assert counts["forward"].total_ops <= 3 * original + OP_SLACK
        assert counts["reverse"].total_ops <= 4 * original + OP_SLACK

    @pytest.mark.parametrize("k", [20, 60])
    def test_long_product_is_linear(self, k):
        names = [f"a{j}" for j in range(k)]
        source = f"double prod({', '.join('double ' + n for n in names)}) {{ return {' * '.join(names)}; }}"
        func = parse(source).get("prod")
        args = {n: 1.0 + 0.01 * j for j, n in enumerate(names)}
        original = EvalStats()
        Interpreter(Program((func,))).call_counted("prod", args, original)
        reverse = EvalStats()
        values = evaluate_gradient(gradient(GradRequest.from_names(func)), args, stats=reverse)
        assert original.total_ops == k - 1
        assert reverse.total_ops <= 4 * original.total_ops + OP_SLACK
        product = math.prod(args.values())
        for name, value in zip(names, values):
            assert relative_close(value, product / args[name], 1e-12)

    def test_reverse_is_one_sweep(self):
        counts = op_counts("sum", 64, ["p"])
        assert counts["reverse"].func_evals == 1
        # forward and reverse loops over the same dim
        assert counts["reverse"].total_ops < 3 * counts["original"].total_ops
