"""Shared oracles: reachability snapshots, graph isomorphism, the
mark-bit byte-diff checker, and the randomized mutator used by the fuzz
criteria."""

import random

from livetalk.objectmodel import (
    FLAG_MARKED, FLAG_SEEN, tag_small_integer, untag_small_integer,
)


# -- reachability ------------------------------------------------------------

def reachable_oops(heap, roots, follow_weak=False):
    """Every heap object reachable from the root oops (host traversal)."""
    seen = set()
    stack = [r for r in roots if isinstance(r, int) and r and not r & 1]
    while stack:
        oop = stack.pop()
        if oop in seen:
            continue
        seen.add(oop)
        if heap.is_bytes_object(oop):
            continue
        if not follow_weak and oop in heap.weak_containers:
            continue
        for i in range(1, heap.object_size(oop) + 1):
            v = heap.read_slot(oop, i)
            if v and not v & 1:
                stack.append(v)
    return seen


def graph_snapshot(heap, roots, follow_weak=True):
    """Canonical serialization of the reachable graph.

    Node labels are (behavior anchor, size, byte payload); reference slots
    become visit indices, so two snapshots are equal exactly when the
    reachable graphs are isomorphic with matching labels.
    """
    index = {}
    records = []
    order = []

    def visit(oop):
        if oop == 0:
            return ("null",)
        if oop & 1:
            return ("int", untag_small_integer(oop))
        if oop in index:
            return ("ref", index[oop])
        index[oop] = len(order)
        order.append(oop)
        return ("ref", index[oop])

    pending = []
    for r in roots:
        pending.append(visit(r))
    cursor = 0
    while cursor < len(order):
        oop = order[cursor]
        cursor += 1
        behavior = heap.behavior_of(oop)
        size = heap.object_size(oop)
        if heap.is_bytes_object(oop):
            records.append(("bytes", behavior, size, heap.bytes_of(oop)))
        else:
            weak = oop in heap.weak_containers
            if weak and not follow_weak:
                records.append(("weak", behavior, size))
                continue
            slots = tuple(visit(heap.read_slot(oop, i)) for i in range(1, size + 1))
            records.append(("obj", behavior, size, slots, weak))
    return (tuple(pending), tuple(records))


# -- mark-bit byte-diff checker ---------------------------------------------------

FLAG_NOISE = FLAG_SEEN | FLAG_MARKED


def snapshot_tenured_bytes(heap):
    """Byte image of every object in the old areas, large zone, and pinned
    space, keyed by oop."""
    snap = {}
    spaces = [a for a in heap.old_areas if a.area_index not in heap.free_areas]
    spaces += [sp for sp, _ in heap.large_objects]
    spaces += list(heap.pinned_segments)
    for sp in spaces:
        for oop in heap.objects_in(sp):
            start = heap.start_of(oop)
            end = oop + 16 + _round16(heap.body_bytes(oop))
            snap[oop] = (bytes(heap.mem[start:end]), oop - start,
                         heap.is_bytes_object(oop))
    return snap


def check_mark_bit_only(heap, before, forward, freed_areas, nil_oop=0):
    """After a full pass, every non-copied surviving object may differ from
    its pre-pass image only in the designated flag bits; reference slots may
    additionally follow the pass's forwarders (and weak slots may drop to
    nil). Returns a list of violation strings."""
    problems = []
    for oop, (image, header_off, bytes_flag) in before.items():
        if oop in forward:
            continue  # copied: originals gain the seen bit, then go away
        area = heap.in_old(oop)
        if area is not None and area.area_index in freed_areas:
            continue  # reclaimed space is no longer an object
        if area is None and not heap.pinned_contains(oop) and \
                heap.in_large(oop) is None:
            continue  # the large segment was released
        start = heap.start_of(oop)
        now = bytes(heap.mem[start:start + len(image)])
        if now == image:
            continue
        # header: only flag bits may differ
        for i in range(16):
            a, b = image[header_off + i], now[header_off + i]
            if a != b and (i != 8 or (a ^ b) & ~FLAG_NOISE & 0xFF):
                problems.append("object %#x header byte %d: %02x -> %02x"
                                % (oop, i, a, b))
        body_base = header_off + 16
        if bytes_flag:
            if image[body_base:] != now[body_base:]:
                problems.append("object %#x bytes body changed" % oop)
            continue
        size = heap.object_size(oop)
        weak = oop in heap.weak_containers
        for i in range(size):
            off = body_base + i * 8
            old_w = int.from_bytes(image[off:off + 8], "little")
            new_w = int.from_bytes(now[off:off + 8], "little")
            if old_w == new_w:
                continue
            if forward.get(old_w) == new_w:
                continue  # updated to the unique copy
            if weak and new_w == nil_oop:
                continue  # weak slot cleared for an unreachable referent
            problems.append("object %#x slot %d: %#x -> %#x"
                            % (oop, i + 1, old_w, new_w))
    return problems


def _round16(n):
    return (n + 15) & ~15


# -- the randomized mutator -------------------------------------------------------

class Mutator:
    """Seeded allocate/mutate/drop-root script driver.

    Live objects are held in a heap-allocated registry array so the driver
    never keeps raw oops across collections.
    """

    def __init__(self, manager, seed, registry_size=48, behaviors=3,
                 array_behavior=0, nil_oop=0):
        self.manager = manager
        self.heap = manager.heap
        self.rng = random.Random(seed)
        self.nil_oop = nil_oop
        heap = self.heap
        if array_behavior:
            self.anchors = [array_behavior]
        else:
            self.anchors = []
            for _ in range(behaviors):
                a = heap.allocate_pinned(0, 0)
                heap.set_behavior(a, a)
                self.anchors.append(a)
        self.registry = heap.allocate(registry_size, self.anchors[0])
        self.registry_size = registry_size
        self.extra_roots = {}
        heap.add_root_provider(self._roots)

    def _roots(self, visit):
        self.registry = visit(self.registry)
        for k in list(self.extra_roots):
            self.extra_roots[k] = visit(self.extra_roots[k])

    def roots(self):
        return [self.registry] + list(self.extra_roots.values())

    def detach(self):
        self.heap.root_providers.remove(self._roots)

    # -- operations -------------------------------------------------------------

    def step(self):
        r = self.rng.random()
        if r < 0.40:
            self.op_alloc()
        elif r < 0.55:
            self.op_alloc_bytes()
        elif r < 0.80:
            self.op_mutate()
        elif r < 0.92:
            self.op_drop()
        elif r < 0.96:
            self.op_link()
        elif r < 0.98:
            self.op_weak()
        else:
            self.op_large()

    def run(self, steps):
        for _ in range(steps):
            self.step()

    def _random_slot(self):
        return self.rng.randrange(1, self.registry_size + 1)

    def _registry_get(self, index):
        return self.heap.read_slot(self.registry, index)

    def op_alloc(self):
        heap = self.heap
        slots = self.rng.randrange(0, 9)
        anchor = self.rng.choice(self.anchors)
        oop = heap.allocate(slots, anchor)
        heap.write_barrier_store(self.registry, self._random_slot(), oop)
        # fill a couple of slots with registry references or integers
        for i in range(1, slots + 1):
            pick = self.rng.random()
            if pick < 0.35:
                v = self._registry_get(self._random_slot())
                if v:
                    heap.write_barrier_store(oop, i, v)
            elif pick < 0.7:
                heap.write_barrier_store(
                    oop, i, tag_small_integer(self.rng.randrange(-1000, 1000)))

    def op_alloc_bytes(self):
        heap = self.heap
        size = self.rng.randrange(0, 49)
        oop = heap.allocate(size, self.rng.choice(self.anchors), bytes_flag=True)
        data = bytes(self.rng.randrange(256) for _ in range(size))
        heap.set_bytes(oop, data)
        heap.write_barrier_store(self.registry, self._random_slot(), oop)

    def op_mutate(self):
        heap = self.heap
        container = self._registry_get(self._random_slot())
        if not container or container & 1 or heap.is_bytes_object(container):
            return
        size = heap.object_size(container)
        if size == 0:
            return
        value = self._registry_get(self._random_slot())
        if value == 0:
            value = tag_small_integer(self.rng.randrange(-99, 100))
        heap.write_barrier_store(container, self.rng.randrange(1, size + 1), value)

    def op_drop(self):
        self.heap.write_barrier_store(self.registry, self._random_slot(),
                                      self.nil_oop)

    def op_link(self):
        heap = self.heap
        a = self._registry_get(self._random_slot())
        b = self._registry_get(self._random_slot())
        if a and b and not a & 1 and not heap.is_bytes_object(a) and \
                heap.object_size(a):
            heap.write_barrier_store(a, 1, b)

    def op_weak(self):
        heap = self.heap
        oop = heap.allocate(4, self.anchors[0])
        for i in range(1, 5):
            v = self._registry_get(self._random_slot())
            if v:
                heap.write_barrier_store(oop, i, v)
        heap.register_weak(oop)
        heap.write_barrier_store(self.registry, self._random_slot(), oop)

    def op_large(self):
        heap = self.heap
        size = heap.large_threshold + self.rng.randrange(0, 2048)
        oop = heap.allocate(size, self.anchors[0], bytes_flag=True)
        heap.write_barrier_store(self.registry, self._random_slot(), oop)


def sweep_for_stale_refs(heap, young_must_be_empty=True):
    """Scan every live object for dangling references. After a young pass
    nothing may point into eden or the inactive survivor space; after any
    pass nothing may point into a freed area."""
    bad = []
    spaces = list(heap.eden_segments) + [heap.from_space] + \
        [a for a in heap.old_areas if a.area_index not in heap.free_areas] + \
        [sp for sp, _ in heap.large_objects] + list(heap.pinned_segments)
    freed = [heap.old_areas[i] for i in heap.free_areas]

    def check(container, i, v):
        if not v or v & 1:
            return
        if young_must_be_empty and heap.in_eden(v):
            bad.append("%#x slot %d -> eden %#x" % (container, i, v))
        elif young_must_be_empty and heap.to_space.contains(v):
            bad.append("%#x slot %d -> inactive survivor %#x" % (container, i, v))
        else:
            for area in freed:
                if area.contains(v):
                    bad.append("%#x slot %d -> freed area %#x" % (container, i, v))

    for sp in spaces:
        for oop in heap.objects_in(sp):
            if heap.is_bytes_object(oop):
                continue
            for i in range(1, heap.object_size(oop) + 1):
                check(oop, i, heap.read_slot(oop, i))
    return bad
