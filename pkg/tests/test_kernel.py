"""Hosted kernel behavior: listing fidelity, arithmetic, float arrays,
bit fields, coverage, and the bootstrap."""

import random
import struct
from pathlib import Path

import pytest

from livetalk.errors import ArithmeticOverflow, BootstrapError, DoesNotUnderstand
from livetalk.frontend import parse_chunks
from livetalk.frontend.chunks import MethodChunk
from livetalk.kernel.bootstrap import KERNEL_FILES, ST_DIR
from livetalk.objectmodel import SMI_MAX, SMI_MIN, tag_small_integer

GOLDENS = Path(__file__).parent / "goldens"

GOLDEN_METHODS = {
    "listing1_size.st": ("ProtoObject", False, "size"),
    "listing2_copyof.st": ("EdenCollector", False, "copyOf:"),
    "listing2_forward.st": ("EdenCollector", False, "forward:to:"),
    "listing3_plus.st": ("SmallInteger", False, "+"),
    "listing4_dispatch.st": ("SendSite", False, "_dispatchOn:"),
    "listing8_objectssurviving.st": ("Memory", False, "objectsSurviving:"),
    "listing9_coverage.st": ("TestSuite", False, "coverage"),
}


def kernel_method_source(behavior, class_side, selector):
    from livetalk.frontend import parse_method
    for name in KERNEL_FILES:
        for item in parse_chunks((ST_DIR / name).read_text(), origin=name):
            if isinstance(item, MethodChunk) and item.behavior == behavior \
                    and item.class_side == class_side:
                if parse_method(item.source).selector == selector:
                    return item.source
    raise AssertionError("method %s>>%s not found" % (behavior, selector))


def normalize(text):
    return "\n".join(line.rstrip() for line in text.strip().splitlines())


@pytest.mark.parametrize("golden", sorted(GOLDEN_METHODS))
def test_kernel_source_matches_the_committed_transliteration(golden):
    behavior, class_side, selector = GOLDEN_METHODS[golden]
    expected = normalize((GOLDENS / golden).read_text())
    actual = normalize(kernel_method_source(behavior, class_side, selector))
    assert actual == expected


# -- SmallInteger arithmetic ------------------------------------------------------

def test_small_sums(shared_rt):
    assert shared_rt.integer_value(shared_rt.evaluate("3 + 4")) == 7


def test_overflow_produces_boxed_integer(shared_rt):
    rt = shared_rt
    out = rt.evaluate("4611686018427387903 + 1")
    assert rt.is_instance_of(out, "LargeInteger")
    assert rt.large_value(out) == 1 << 62


def test_mixed_addition_retries_on_the_argument(shared_rt):
    rt = shared_rt
    assert rt.float_value(rt.evaluate("3 + 4.0")) == 7.0
    assert rt.float_value(rt.evaluate("4.0 + 3")) == 7.0


def test_non_plus_type_mismatch_is_dnu(shared_rt):
    with pytest.raises(DoesNotUnderstand):
        shared_rt.evaluate("3 - 4.0")


def test_arithmetic_differential_against_wide_integers(shared_rt):
    rt = shared_rt
    send = rt.engine.send_by_selector
    rng = random.Random(42)
    pairs = [(rng.randint(SMI_MIN, SMI_MAX), rng.randint(SMI_MIN, SMI_MAX))
             for _ in range(2000)]
    pairs += [(SMI_MAX, 1), (SMI_MIN, -1), (SMI_MAX, SMI_MAX), (SMI_MIN, SMI_MIN),
              (SMI_MAX, 0), (0, SMI_MIN), (SMI_MAX - 1, 1), (SMI_MIN + 1, -1)]
    for a, b in pairs:
        expected = a + b
        got = send(tag_small_integer(a), "+", [tag_small_integer(b)])
        assert rt.integer_value(got) == expected
        for sel, op in (("<", a < b), ("<=", a <= b), (">", a > b),
                        ("=", a == b)):
            assert (send(tag_small_integer(a), sel, [tag_small_integer(b)])
                    == rt.true_oop) == op
        try:
            got = send(tag_small_integer(a), "-", [tag_small_integer(b)])
            assert rt.integer_value(got) == a - b
        except ArithmeticOverflow:
            assert not -(1 << 63) <= a - b <= (1 << 63) - 1
        try:
            got = send(tag_small_integer(a), "*", [tag_small_integer(b)])
            assert rt.integer_value(got) == a * b
        except ArithmeticOverflow:
            assert not -(1 << 63) <= a * b <= (1 << 63) - 1


# -- ProtoObject size ----------------------------------------------------------------------

def test_hosted_size_small_and_large(shared_rt):
    rt = shared_rt
    assert rt.integer_value(rt.evaluate("(Array new: 7) size")) == 7
    assert rt.integer_value(rt.evaluate("(Array new: 300) size")) == 300
    assert rt.integer_value(rt.evaluate("(Array new: 0) size")) == 0
    assert rt.integer_value(rt.evaluate("'hello' size")) == 5


def test_size_of_immediate_is_dnu(shared_rt):
    with pytest.raises(DoesNotUnderstand):
        shared_rt.evaluate("3 size")


# -- FloatArray --------------------------------------------------------------------------------

def float_array(rt, values):
    oop = rt.evaluate("FloatArray new: %d" % len(values))
    for i, v in enumerate(values):
        rt.write_f32(oop, i + 1, v)
    return oop


def read_back(rt, oop):
    n = rt.heap.object_size(oop) // 4
    return [rt.read_f32(oop, i + 1) for i in range(n)]


def test_plus_equals_scalar_and_simd_identical(rt):
    for simd in (True, False):
        rt.simd_enabled = simd
        a = float_array(rt, [1, 2, 3, 4])
        b = float_array(rt, [10, 20, 30, 40])
        rt.handles[900] = a
        rt.handles[901] = b
        rt.engine.send_by_selector(a, "+=", [b])
        assert read_back(rt, rt.handles[900]) == [11.0, 22.0, 33.0, 44.0]
        rt.handles.clear()


def test_simd_size_six_is_one_packed_group_plus_tail(rt):
    a = float_array(rt, [1, 2, 3, 4, 5, 6])
    assert rt.integer_value(rt.engine.send_by_selector(a, "simdSize", [])) == 1
    b = float_array(rt, [1, 1, 1, 1, 1, 1])
    rt.handles[900] = a
    rt.engine.send_by_selector(a, "basicSimdPlus:", [b])
    assert read_back(rt, rt.handles[900]) == [2.0, 3.0, 4.0, 5.0, 6.0, 7.0]
    rt.handles.clear()


def test_mismatched_sizes_fall_back_to_the_prefix(rt):
    a = float_array(rt, [1, 2, 3])
    b = float_array(rt, [10, 20, 30, 40, 50])
    rt.handles[900] = a
    rt.engine.send_by_selector(a, "+=", [b])
    assert read_back(rt, rt.handles[900]) == [11.0, 22.0, 33.0]
    rt.handles.clear()


def test_non_float_array_argument_falls_back_harmlessly(rt):
    a = float_array(rt, [1, 2])
    rt.handles[900] = a
    rt.engine.send_by_selector(a, "+=", [rt.evaluate("Array new: 2")])
    assert read_back(rt, rt.handles[900]) == [1.0, 2.0]
    rt.handles.clear()


def test_simd_scalar_equivalence_random(rt):
    rng = random.Random(99)
    for size in [0, 1, 2, 3, 4, 5, 7, 8, 15, 33]:
        values_a = [struct.unpack("<f", struct.pack("<f", rng.uniform(-1e3, 1e3)))[0]
                    for _ in range(size)]
        values_b = [struct.unpack("<f", struct.pack("<f", rng.uniform(-1e3, 1e3)))[0]
                    for _ in range(size)]
        a1 = float_array(rt, values_a)
        b1 = float_array(rt, values_b)
        rt.handles[1] = a1
        rt.handles[2] = b1
        rt.engine.send_by_selector(a1, "basicPlus:", [b1])
        scalar = rt.heap.bytes_of(rt.handles[1])
        a2 = float_array(rt, values_a)
        b2 = float_array(rt, values_b)
        rt.handles[3] = a2
        rt.handles[4] = b2
        rt.engine.send_by_selector(a2, "basicSimdPlus:", [b2])
        simd = rt.heap.bytes_of(rt.handles[3])
        assert scalar == simd
        rt.handles.clear()


# -- BitField ----------------------------------------------------------------------------------------

def test_bits_at_examples(shared_rt):
    rt = shared_rt
    assert rt.integer_value(rt.evaluate("80 bitsAt: (BitField bits: 4 to: 6)")) == 5
    assert rt.integer_value(rt.evaluate("0 bitsAt: (BitField bits: 3 to: 9)")) == 0
    assert rt.integer_value(rt.evaluate("1 bitsAt: (BitField bits: 0 to: 0)")) == 1


def test_bits_at_put_read_write_identity(shared_rt):
    rt = shared_rt
    for low, high in [(0, 0), (4, 6), (0, 15), (7, 7), (3, 11)]:
        for x in [0, 1, 0x50, 0xFFFF, 0x1234]:
            got = rt.evaluate(
                "| f | f := BitField bits: %d to: %d. %d bitsAt: f put: (%d bitsAt: f)"
                % (low, high, x, x))
            assert rt.integer_value(got) == x


def test_bits_at_put_truncates_to_field_width(shared_rt):
    rt = shared_rt
    got = rt.evaluate("| f | f := BitField bits: 1 to: 2. 0 bitsAt: f put: 255")
    assert rt.integer_value(got) == 0b110


# -- coverage -----------------------------------------------------------------------------------------------

def coverage_trace_oracle(rt, coverage_source):
    """Run a hosted coverage expression while independently tracing method
    entries; the trace between the cache clear and the count is the
    executed set."""
    trace = []
    phase = {"recording": False}

    def hook(method):
        if method.selector == "clearCodeCache":
            phase["recording"] = True
            trace.clear()
            return
        if phase["recording"] and not method.transient:
            trace.append(method)
        if method.selector == "count:":
            phase["recording"] = False

    rt.engine.method_entry_hook = hook
    try:
        fraction = rt.float_value(rt.evaluate(coverage_source))
    finally:
        rt.engine.method_entry_hook = None
    registry_ids = {id(m) for m in rt.method_registry}
    executed = {id(m) for m in trace if id(m) in registry_ids}
    return fraction, len(executed) / len(rt.method_registry)


def test_coverage_counts_executed_methods(rt):
    from livetalk.kernel.bootstrap import install_method_source
    rt.define_class("CovTarget", "Object", ())
    for i in range(10):
        install_method_source(rt, "CovTarget", "m%d\n\t^%d" % (i, i))
    rt.evaluate("""
        Suite := TestSuite new.
        Suite add: [CovTarget new m0].
        Suite add: [CovTarget new m1].
        Suite add: [CovTarget new m2. CovTarget new m3]
    """)
    fraction, expected = coverage_trace_oracle(rt, "Suite coverage")
    assert fraction == expected
    target = rt.behaviors["CovTarget"]
    ran = {sel for sel, m in target.methods.items() if rt.engine.has_native_code(m)}
    assert ran == {"m0", "m1", "m2", "m3"}


def test_empty_suite_counts_only_runner_methods(rt):
    from livetalk.kernel.bootstrap import install_method_source
    rt.define_class("Untouched", "Object", ())
    install_method_source(rt, "Untouched", "neverRan\n\t^0")
    fraction = rt.float_value(rt.evaluate("TestSuite new coverage"))
    assert fraction > 0  # the suite runner's own methods executed
    # filtered to the target class, nothing ran
    target = rt.behaviors["Untouched"]
    ran = [m for m in target.methods.values() if rt.engine.has_native_code(m)]
    assert ran == []


def test_coverage_run_protocol_op(rt):
    import threading
    from livetalk.services.inspector import InspectorServer
    server = InspectorServer(rt, port=0)
    stop = threading.Event()

    def drain():
        while not stop.is_set():
            rt.run_pending()
            time_sleep(0.002)

    from time import sleep as time_sleep
    t = threading.Thread(target=drain, daemon=True)
    t.start()
    try:
        reply = server.handle({"id": 1, "op": "coverage_run", "params": {}})
    finally:
        stop.set()
        server.stop()
    assert reply["ok"] and 0 < reply["result"] < 1


def test_coverage_of_a_full_suite_is_one(rt):
    from livetalk.kernel.bootstrap import install_method_source
    rt.define_class("TinyCov", "Object", ())
    install_method_source(rt, "TinyCov", "only\n\t^1")
    rt.evaluate("S2 := TestSuite new. S2 add: [TinyCov new only]")
    rt.evaluate("S2 coverage")
    target = rt.behaviors["TinyCov"]
    assert all(rt.engine.has_native_code(m) for m in target.methods.values())


# -- bootstrap ------------------------------------------------------------------------------------------------

def test_boot_then_evaluate(shared_rt):
    assert shared_rt.integer_value(shared_rt.evaluate("3 + 4")) == 7


def test_boot_then_immediate_scavenge(rt):
    rt.memory.collect_young()  # GC paths were pinned by the bootstrap
    assert rt.memory.pass_log[-1].kind == "young"


def test_bootstrap_error_names_the_chunk(tmp_path):
    from livetalk.kernel.bootstrap import bootstrap
    from livetalk.runtime import Runtime
    bad = tmp_path / "bad.st"
    bad.write_text("!Object methods!\nbroken ^^^\n!\n")
    with pytest.raises(BootstrapError) as err:
        bootstrap(Runtime(), extra_files=[bad])
    assert "broken" in str(err.value)


def test_gc_methods_stay_compiled_before_every_pass(rt):
    # clearing the cache must not make collection impossible
    rt.engine.clear_code_cache()
    rt.evaluate("| x | 1 to: 3000 do: [:i | x := Array new: 8]")
    assert any(r.kind == "young" for r in rt.memory.pass_log)


# -- benchmarks (hosted checksums) ---------------------------------------------------------------------------------

@pytest.mark.parametrize("name,expected", [
    ("Sieve", 669), ("Towers", 8191), ("List", 10), ("Bounce", 1331),
])
def test_benchmark_checksums(shared_rt, name, expected):
    got = shared_rt.integer_value(
        shared_rt.evaluate("Benchmarks run: '%s'" % name))
    assert got == expected


def test_unknown_benchmark_lists_available(shared_rt):
    from livetalk.services.live import run_benchmarks
    from livetalk.errors import HostedError
    with pytest.raises(HostedError) as err:
        run_benchmarks(shared_rt, ["Nope"])
    assert "Sieve" in str(err.value)
