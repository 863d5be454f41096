"""Tagged values, headers, allocation, forwarding, barrier, and roots."""

import random

import pytest
from hypothesis import given, strategies as st

from livetalk.errors import (
    AlignmentError, IndexOutOfBounds, NotAHeapObject, NotAtSafepoint, WrongSpace,
)
from livetalk.memory import GCConfig, MemoryManager
from livetalk.objectmodel import (
    FLAG_REMEMBERED, FLAG_SMALL, ForwardersTable, GRAIN, Heap,
    SMI_MAX, SMI_MIN, is_small_integer, tag_small_integer, untag_small_integer,
)

from helpers import Mutator


def bare_heap(**kw):
    kw.setdefault("eden_size", 16 * 1024)
    kw.setdefault("survivor_size", 8 * 1024)
    heap = Heap(**kw)
    anchor = heap.allocate_pinned(0, 0)
    heap.set_behavior(anchor, anchor)
    return heap, anchor


# -- tagging ---------------------------------------------------------------------

def test_tag_zero_and_five():
    assert tag_small_integer(0) == 0x1
    assert tag_small_integer(5) == 0xB


def test_tag_minus_one_is_all_bits():
    oop = tag_small_integer(-1)
    assert oop == (1 << 64) - 1
    assert untag_small_integer(oop) == -1


def test_tag_roundtrip_random_million():
    rng = random.Random(1234)
    for _ in range(10 ** 6):
        v = rng.randint(SMI_MIN, SMI_MAX)
        oop = tag_small_integer(v)
        assert oop & 1
        assert untag_small_integer(oop) == v


@given(st.integers(min_value=SMI_MIN, max_value=SMI_MAX))
def test_tag_roundtrip_property(v):
    oop = tag_small_integer(v)
    assert is_small_integer(oop)
    assert untag_small_integer(oop) == v


@pytest.mark.parametrize("v", [SMI_MIN - 1, SMI_MAX + 1, 1 << 63, -(1 << 63)])
def test_tag_out_of_range(v):
    from livetalk.errors import OverflowRange
    with pytest.raises(OverflowRange):
        tag_small_integer(v)


# -- object size --------------------------------------------------------------------

def test_object_size_small_branch():
    heap, anchor = bare_heap()
    oop = heap.allocate(7, anchor)
    assert heap.flags_of(oop) & FLAG_SMALL
    assert heap.object_size(oop) == 7


def test_object_size_large_branch():
    heap, anchor = bare_heap()
    oop = heap.allocate(300, anchor)
    assert not heap.flags_of(oop) & FLAG_SMALL
    assert heap.object_size(oop) == 300
    assert heap.read_u32(oop - 4) == 300


def test_object_size_zero_slots():
    heap, anchor = bare_heap()
    assert heap.object_size(heap.allocate(0, anchor)) == 0


def test_object_size_of_immediate_raises():
    heap, _ = bare_heap()
    with pytest.raises(NotAHeapObject):
        heap.object_size(tag_small_integer(3))


# -- allocation ------------------------------------------------------------------------

def test_allocation_is_contiguous_and_rounded():
    heap, anchor = bare_heap()
    a = heap.allocate(3, anchor)
    b = heap.allocate(3, anchor)
    assert b - a == 48  # 16-byte header + 24-byte body, rounded up to 16
    assert a % GRAIN == 0 and b % GRAIN == 0


def test_allocation_zero_fills_body():
    heap, anchor = bare_heap()
    oop = heap.allocate(4, anchor)
    assert all(heap.read_slot(oop, i) == 0 for i in range(1, 5))


def test_huge_allocation_lands_in_large_zone():
    heap, anchor = bare_heap(large_threshold=4 * 1024)
    oop = heap.allocate(2 * heap.eden_size, anchor, bytes_flag=True)
    assert heap.in_large(oop) is not None
    assert not heap.in_young(oop)


def test_eden_exhaustion_triggers_the_hook():
    heap, anchor = bare_heap()
    ran = []
    heap.eden_full_hook = lambda: (ran.append(1), heap.eden_segments[0].reset())
    while not ran:
        heap.allocate(8, anchor)
    assert ran


def test_allocation_during_pass_goes_to_scratch_and_is_reclaimed():
    cfg = GCConfig(eden_size=16 * 1024, survivor_size=8 * 1024,
                   old_area_size=8 * 1024)
    mm = MemoryManager(config=cfg)
    heap = mm.heap
    anchor = heap.allocate_pinned(0, 0)
    heap.set_behavior(anchor, anchor)
    placed = []

    def begin(kind):
        oop = heap.allocate(4, anchor)
        placed.append(oop)
        assert heap.in_scratch(oop)

    mm.pass_begin_hook = begin
    mm.collect_young()
    assert placed
    assert heap.scratch.used == 0  # reclaimed at pass end


def test_gc_disabled_eden_grows_with_overflow_segments():
    cfg = GCConfig(eden_size=16 * 1024, survivor_size=8 * 1024,
                   old_area_size=8 * 1024)
    mm = MemoryManager(config=cfg)
    heap = mm.heap
    anchor = heap.allocate_pinned(0, 0)
    heap.set_behavior(anchor, anchor)
    mm.disable_gc()
    oops = [heap.allocate(16, anchor) for _ in range(300)]  # ~2x eden
    assert len(heap.eden_segments) > 1
    assert all(heap.in_eden(o) for o in oops)
    assert not mm.pass_log
    mm.enable_gc()
    mm.collect_young()
    assert len(mm.pass_log) == 1
    assert len(heap.eden_segments) == 1


# -- forwarding index ----------------------------------------------------------------------

def test_forwarding_index_base_case():
    heap, anchor = bare_heap()
    space = heap.eden_segments[0]
    assert heap.forwarding_index_of(space.base, space) == 1


def test_forwarding_index_at_0x40():
    heap, anchor = bare_heap()
    space = heap.eden_segments[0]
    assert heap.forwarding_index_of(space.base + 0x40, space) == 5


def test_forwarding_index_misaligned():
    heap, anchor = bare_heap()
    space = heap.eden_segments[0]
    with pytest.raises(AlignmentError):
        heap.forwarding_index_of(space.base + 8, space)


def test_forwarding_index_wrong_space():
    heap, anchor = bare_heap()
    with pytest.raises(WrongSpace):
        heap.forwarding_index_of(heap.from_space.base, heap.eden_segments[0])


def test_forwarders_table_type():
    table = ForwardersTable(0x1000, 0x200)
    assert table.index_of(0x1000) == 1
    assert table.index_of(0x1040) == 5
    table.at_put(5, 0xBEEF0)
    assert table.at(5) == 0xBEEF0
    with pytest.raises(AlignmentError):
        table.index_of(0x1008)


# -- write barrier ----------------------------------------------------------------------------

def barrier_setup():
    cfg = GCConfig(eden_size=16 * 1024, survivor_size=8 * 1024,
                   old_area_size=8 * 1024, tenure_age=1)
    mm = MemoryManager(config=cfg)
    heap = mm.heap
    anchor = heap.allocate_pinned(0, 0)
    heap.set_behavior(anchor, anchor)
    holder = {"old": heap.allocate(3, anchor)}
    heap.add_root_provider(lambda visit: holder.__setitem__("old", visit(holder["old"])))
    mm.collect_young()  # tenure_age 1 tenures on the first copy
    old = holder["old"]
    assert heap.in_old(old) is not None
    return mm, heap, anchor, old


def test_barrier_remembers_old_to_young():
    mm, heap, anchor, old = barrier_setup()
    young = heap.allocate(1, anchor)
    before = len(heap.remembered)
    heap.write_barrier_store(old, 1, young)
    assert len(heap.remembered) == before + 1
    assert heap.flags_of(old) & FLAG_REMEMBERED


def test_barrier_ignores_immediates():
    mm, heap, anchor, old = barrier_setup()
    before = set(heap.remembered)
    heap.write_barrier_store(old, 1, tag_small_integer(7))
    assert set(heap.remembered) == before


def test_barrier_ignores_young_to_young():
    mm, heap, anchor, old = barrier_setup()
    a = heap.allocate(2, anchor)
    b = heap.allocate(1, anchor)
    before = set(heap.remembered)
    heap.write_barrier_store(a, 1, b)
    assert set(heap.remembered) == before


def test_barrier_bounds_check():
    mm, heap, anchor, old = barrier_setup()
    with pytest.raises(IndexOutOfBounds):
        heap.write_barrier_store(old, 9, tag_small_integer(1))


def test_barrier_soundness_under_random_stores():
    cfg = GCConfig(eden_size=8 * 1024, survivor_size=4 * 1024,
                   old_area_size=8 * 1024, initial_full_threshold=1 << 30)
    mm = MemoryManager(config=cfg)
    mut = Mutator(mm, seed=7)
    mut.run(4000)
    heap = mm.heap
    # every old container holding a young reference must be remembered
    for area in heap.old_areas:
        if area.area_index in heap.free_areas:
            continue
        for oop in heap.objects_in(area):
            if heap.is_bytes_object(oop):
                continue
            for i in range(1, heap.object_size(oop) + 1):
                v = heap.read_slot(oop, i)
                if v and not v & 1 and heap.in_young(v):
                    assert oop in heap.remembered, hex(oop)


# -- roots -----------------------------------------------------------------------------------------

def test_enumerate_roots_visits_single_global():
    heap, anchor = bare_heap()
    table = {"g": heap.allocate(1, anchor)}
    heap.add_root_provider(
        lambda visit: table.__setitem__("g", visit(table["g"])))
    seen = []
    heap.enumerate_roots(lambda oop: (seen.append(oop), oop)[1])
    assert seen == [table["g"]]


def test_enumerate_roots_outside_safepoint_raises():
    heap, anchor = bare_heap()
    heap.at_safepoint = False
    with pytest.raises(NotAtSafepoint):
        heap.enumerate_roots(lambda oop: oop)


def test_stack_slot_keeps_object_alive(rt):
    # an object reachable only from an active hosted frame survives
    out = rt.evaluate("""
        | probe |
        probe := Array new: 1.
        probe at: 1 put: 4242.
        Smalltalk memory collectYoung.
        probe at: 1
    """)
    assert rt.integer_value(out) == 4242


def test_send_site_cached_behavior_survives_full_gc(rt):
    rt.evaluate("| a | a := Array new: 1")  # bind some sites
    sites = [s for s in rt.engine.send_sites if s.cached_behavior]
    assert sites
    rt.memory.collect_full()
    for s in sites:
        if s.cached_behavior:
            assert rt.behavior_by_anchor.get(s.cached_behavior) is not None


# -- header stability ---------------------------------------------------------------------------------

def test_headers_stay_valid_across_passes():
    cfg = GCConfig(eden_size=8 * 1024, survivor_size=4 * 1024,
                   old_area_size=8 * 1024, initial_full_threshold=16 * 1024,
                   growth_factor=1.2)
    mm = MemoryManager(config=cfg)
    mut = Mutator(mm, seed=99)
    for _ in range(20):
        mut.run(500)
        mm.collect_young()
        mm.heap.check_headers()
    mm.collect_full()
    mm.heap.check_headers()
