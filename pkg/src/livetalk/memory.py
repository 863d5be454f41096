"""The collectors: a generational copying scavenger and a region-based,
one-pass, opportunistic evacuating full collector.

Copying never touches an original object's behavior or body; forwarding
lives in an external table and the only header mutations are the
HasBeenSeen bit (copied originals) and the mark bit (full passes).
Selection of evacuation areas and the full-GC trigger are policy hooks,
replaceable at run time.
"""

import time
from collections import deque

from .errors import OutOfMemory
from .objectmodel import (
    FLAG_BYTES, FLAG_MARKED, FLAG_REMEMBERED, FLAG_SEEN, GRAIN, Heap,
)


class GCConfig:
    FIELDS = ("edenSize", "survivorSize", "oldAreaSize", "largeObjectThreshold",
              "tenureAge", "fullGCGrowthFactor", "initialFullThreshold",
              "evacuationUsageThreshold", "evacuationBudget")

    def __init__(self, eden_size=256 * 1024, survivor_size=64 * 1024,
                 old_area_size=64 * 1024, large_object_threshold=16 * 1024,
                 tenure_age=2, growth_factor=1.5, initial_full_threshold=1024 * 1024,
                 evacuation_usage_threshold=0.5, evacuation_budget=0):
        self.eden_size = eden_size
        self.survivor_size = survivor_size
        self.old_area_size = old_area_size
        self.large_object_threshold = large_object_threshold
        self.tenure_age = tenure_age
        self.growth_factor = growth_factor
        self.initial_full_threshold = initial_full_threshold
        self.evacuation_usage_threshold = evacuation_usage_threshold
        self.evacuation_budget = evacuation_budget  # 0 selects the automatic budget
        self.validate()

    def validate(self):
        for name in ("eden_size", "survivor_size", "old_area_size",
                     "large_object_threshold"):
            v = getattr(self, name)
            if not isinstance(v, int) or v <= 0 or v % GRAIN:
                raise ValueError("%s must be a positive multiple of 16" % name)
        if not 0 <= self.evacuation_usage_threshold <= 1:
            raise ValueError("evacuationUsageThreshold must lie in [0, 1]")
        if self.tenure_age < 1:
            raise ValueError("tenureAge must be at least 1")

    def to_dict(self):
        return {
            "edenSize": self.eden_size,
            "survivorSize": self.survivor_size,
            "oldAreaSize": self.old_area_size,
            "largeObjectThreshold": self.large_object_threshold,
            "tenureAge": self.tenure_age,
            "fullGCGrowthFactor": self.growth_factor,
            "initialFullThreshold": self.initial_full_threshold,
            "evacuationUsageThreshold": self.evacuation_usage_threshold,
            "evacuationBudget": self.evacuation_budget,
        }


class AreaUsage:
    __slots__ = ("area_index", "capacity", "live_bytes")

    def __init__(self, area_index, capacity, live_bytes):
        self.area_index = area_index
        self.capacity = capacity
        self.live_bytes = live_bytes

    @property
    def usage_ratio(self):
        return self.live_bytes / self.capacity if self.capacity else 1.0

    def __repr__(self):
        return "<AreaUsage %d %.2f>" % (self.area_index, self.usage_ratio)


class GCStatsRecord:
    FIELDS = ("kind", "startTime", "durationMicros", "bytesBefore", "bytesAfter",
              "survivorsBytes", "tenuredBytes", "tenuredCount",
              "rememberedSetSize", "edenSize", "areasEvacuated")

    def __init__(self, kind, start_time, duration_micros, bytes_before, bytes_after,
                 survivors_bytes, tenured_bytes, tenured_count, remembered_set_size,
                 eden_size, areas_evacuated=None):
        self.kind = kind
        self.start_time = start_time
        self.duration_micros = duration_micros
        self.bytes_before = bytes_before
        self.bytes_after = bytes_after
        self.survivors_bytes = survivors_bytes
        self.tenured_bytes = tenured_bytes
        self.tenured_count = tenured_count
        self.remembered_set_size = remembered_set_size
        self.eden_size = eden_size
        self.areas_evacuated = areas_evacuated

    def to_dict(self):
        d = {
            "kind": self.kind,
            "startTime": self.start_time,
            "durationMicros": self.duration_micros,
            "bytesBefore": self.bytes_before,
            "bytesAfter": self.bytes_after,
            "survivorsBytes": self.survivors_bytes,
            "tenuredBytes": self.tenured_bytes,
            "tenuredCount": self.tenured_count,
            "rememberedSetSize": self.remembered_set_size,
            "edenSize": self.eden_size,
        }
        if self.kind == "full":
            d["areasEvacuated"] = self.areas_evacuated
        return d

    def __repr__(self):
        return "<GCStatsRecord %s %dus>" % (self.kind, self.duration_micros)


class DefaultPolicy:
    """Built-in equivalents of the hosted policies, used before a kernel is
    attached and as the reference implementation in tests."""

    def __init__(self, manager):
        self.manager = manager

    def should_trigger_full(self, old_live, last_full_live):
        config = self.manager.config
        threshold = max(config.initial_full_threshold,
                        config.growth_factor * last_full_live)
        return old_live >= threshold

    def select_evacuation_areas(self, usages):
        config = self.manager.config
        budget = config.evacuation_budget or self.manager.auto_budget()
        candidates = [u for u in usages
                      if u.usage_ratio < config.evacuation_usage_threshold]
        candidates.sort(key=lambda u: (u.usage_ratio, u.area_index))
        return [u.area_index for u in candidates[:budget]]


class MemoryManager:
    """Drives the heap's collections and keeps the pass log."""

    def __init__(self, heap=None, config=None):
        self.config = config or GCConfig()
        self.heap = heap or Heap(
            eden_size=self.config.eden_size,
            survivor_size=self.config.survivor_size,
            old_area_size=self.config.old_area_size,
            large_threshold=self.config.large_object_threshold,
        )
        self.heap.eden_full_hook = self.on_eden_full
        self.policy = DefaultPolicy(self)
        self.pass_log = []
        self.last_full_live = 0
        self.old_live_estimate = 0
        self.area_usages = []
        self.nil_oop = 0
        self.event_hook = None
        self.pass_begin_hook = None
        self.pass_end_hook = None
        self.pending_eden_size = None
        self.pending_survivor_size = None
        self._boot_epoch = time.monotonic_ns()
        self._in_trigger_check = False
        self.debug_capture = False
        self.last_forward = {}
        self.last_selected = set()

    # -- control -------------------------------------------------------------

    def disable_gc(self):
        self.heap.gc_disabled += 1

    def enable_gc(self):
        if self.heap.gc_disabled:
            self.heap.gc_disabled -= 1

    @property
    def enabled(self):
        return self.heap.gc_disabled == 0

    def gc_stats(self):
        return list(self.pass_log)

    def on_eden_full(self):
        self.collect_young()

    def _now(self):
        return (time.monotonic_ns() - self._boot_epoch) // 1000

    # -- configuration ---------------------------------------------------------

    def set_config(self, **updates):
        """Apply configuration changes; space resizes take effect through a
        scavenge so survivors move into freshly sized spaces."""
        mapping = {
            "edenSize": "eden_size", "survivorSize": "survivor_size",
            "oldAreaSize": "old_area_size",
            "largeObjectThreshold": "large_object_threshold",
            "tenureAge": "tenure_age", "fullGCGrowthFactor": "growth_factor",
            "initialFullThreshold": "initial_full_threshold",
            "evacuationUsageThreshold": "evacuation_usage_threshold",
            "evacuationBudget": "evacuation_budget",
        }
        resize = False
        for key, value in updates.items():
            attr = mapping.get(key, key)
            if not hasattr(self.config, attr):
                raise ValueError("unknown GC configuration field %r" % key)
            setattr(self.config, attr, value)
            if attr in ("eden_size", "survivor_size"):
                resize = True
        self.config.validate()
        self.heap.large_threshold = self.config.large_object_threshold
        self.heap.old_area_size = self.config.old_area_size
        if resize:
            self.pending_eden_size = self.config.eden_size
            self.pending_survivor_size = self.config.survivor_size
            if self.enabled and not self.heap.in_pass:
                self.collect_young()

    def auto_budget(self):
        free = len(self.heap.free_areas)
        return max(1, free // 4) if free else 1

    # -- scavenger ------------------------------------------------------------------

    def collect_young(self):
        """Copy the live young closure into to-space (tenuring old-enough
        objects), flip from and to, reset eden."""
        heap = self.heap
        if not self.enabled or heap.in_pass:
            return None
        start = self._now()
        t0 = time.perf_counter_ns()
        heap.in_pass = True
        was_safe = heap.at_safepoint
        heap.at_safepoint = True
        if self.pass_begin_hook:
            self.pass_begin_hook("young")
        try:
            record = self._scavenge(start, t0)
        finally:
            heap.in_pass = False
            heap.at_safepoint = was_safe
            self._reset_scratch()
        self.pass_log.append(record)
        self._emit(record)
        if self.pass_end_hook:
            self.pass_end_hook("young")
        if not self._in_trigger_check:
            # a hosted trigger policy may itself allocate and scavenge;
            # nested scavenges skip the check rather than recurse
            self._in_trigger_check = True
            try:
                trigger = self.policy.should_trigger_full(
                    self.old_live_estimate, self.last_full_live)
            finally:
                self._in_trigger_check = False
            if trigger:
                self.collect_full()
        return record

    def _scavenge(self, start, t0):
        heap = self.heap
        if self.pending_survivor_size is not None and \
                heap.to_space.capacity != self.pending_survivor_size:
            heap.spaces.remove(heap.to_space)
            heap.to_space = heap._carve("to", "survivor", self.pending_survivor_size)
        bytes_before = sum(seg.used for seg in heap.eden_segments) + heap.from_space.used
        to_space = heap.to_space
        forward = {}
        worklist = deque()
        tenure_age = self.config.tenure_age
        stats = {"survivors": 0, "tenured_bytes": 0, "tenured_count": 0}
        in_young = heap.in_young
        mem = heap.mem

        def copy_young(oop):
            copy = forward.get(oop)
            if copy is not None:
                return copy
            units = heap.object_size(oop)
            flags = mem[oop + 8]
            bytes_flag = bool(flags & FLAG_BYTES)
            age = ((flags & 0x60) >> 5) + 1
            footprint = heap.footprint(oop)
            body_units = units if bytes_flag else units * 8
            if age >= tenure_age or to_space.remaining() < footprint:
                copy = heap.allocate_old(units, 0, bytes_flag)
                stats["tenured_bytes"] += footprint
                stats["tenured_count"] += 1
            else:
                copy = heap._place(to_space, units, body_units, 0, bytes_flag, age)
                stats["survivors"] += footprint
            # clone header and body; the original keeps everything but gains
            # the seen bit
            heap.set_behavior(copy, heap.behavior_of(oop))
            new_flags = mem[copy + 8] & ~(FLAG_SEEN | FLAG_MARKED | FLAG_REMEMBERED)
            mem[copy + 8] = new_flags
            mem[copy + 10:copy + 12] = mem[oop + 10:oop + 12]
            body = heap.body_bytes(oop)
            mem[copy + 16:copy + 16 + body] = mem[oop + 16:oop + 16 + body]
            mem[oop + 8] = flags | FLAG_SEEN
            forward[oop] = copy
            worklist.append(copy)
            return copy

        def visit(oop):
            if oop & 1 or oop == 0:
                return oop
            if in_young(oop):
                return copy_young(oop)
            return oop

        heap.enumerate_roots(visit)
        for container in list(heap.remembered):
            if mem[container + 8] & FLAG_BYTES:
                continue
            base = container + 16
            for i in range(heap.object_size(container)):
                v = heap.read_word(base + i * 8)
                if v and not v & 1 and in_young(v):
                    heap.write_word(base + i * 8, copy_young(v))
        while worklist:
            obj = worklist.popleft()
            flags = mem[obj + 8]
            if flags & FLAG_BYTES:
                continue
            base = obj + 16
            tenured = not in_young(obj)
            saw_young = False
            for i in range(heap.object_size(obj)):
                v = heap.read_word(base + i * 8)
                if v and not v & 1 and in_young(v):
                    nv = copy_young(v)
                    heap.write_word(base + i * 8, nv)
                    if in_young(nv):
                        saw_young = True
            if tenured and saw_young:
                heap.remember(obj)

        # weak containers move like everything else during a scavenge
        new_weak = set()
        for w in heap.weak_containers:
            if in_young(w):
                if w in forward:
                    new_weak.add(forward[w])
            else:
                new_weak.add(w)
        heap.weak_containers = new_weak

        # prune remembered containers with no remaining young references
        for container in list(heap.remembered):
            flags = mem[container + 8]
            keep = False
            if not flags & FLAG_BYTES:
                base = container + 16
                for i in range(heap.object_size(container)):
                    v = heap.read_word(base + i * 8)
                    if v and not v & 1 and to_space.contains(v):
                        keep = True
                        break
            if not keep:
                heap.forget(container)

        self._flip_and_reset()
        self.old_live_estimate += stats["tenured_bytes"]
        duration = (time.perf_counter_ns() - t0) // 1000
        return GCStatsRecord(
            "young", start, duration, bytes_before, heap.from_space.used,
            stats["survivors"], stats["tenured_bytes"], stats["tenured_count"],
            len(heap.remembered), heap.eden_segments[0].capacity)

    def _flip_and_reset(self):
        heap = self.heap
        heap.from_space, heap.to_space = heap.to_space, heap.from_space
        heap.from_space.name, heap.to_space.name = "from", "to"
        heap.to_space.reset()
        if self.pending_survivor_size is not None:
            # survivors now sit in the freshly sized space; retire the other
            if heap.to_space.capacity != self.pending_survivor_size:
                heap.spaces.remove(heap.to_space)
                heap.to_space = heap._carve("to", "survivor", self.pending_survivor_size)
            heap.survivor_size = self.pending_survivor_size
            self.pending_survivor_size = None
        for seg in heap.eden_segments[1:]:
            heap.spaces.remove(seg)
        if self.pending_eden_size is not None and \
                heap.eden_segments[0].capacity != self.pending_eden_size:
            heap.spaces.remove(heap.eden_segments[0])
            heap.eden_segments = [heap._carve("eden", "eden", self.pending_eden_size)]
            heap.eden_size = self.pending_eden_size
        else:
            heap.eden_segments = [heap.eden_segments[0]]
            heap.eden_segments[0].reset()
        self.pending_eden_size = None

    def _reset_scratch(self):
        heap = self.heap
        if any(heap.in_scratch(w) for w in heap.weak_containers):
            heap.weak_containers = {w for w in heap.weak_containers
                                    if not heap.in_scratch(w)}
        for seg in heap.scratch_segments[1:]:
            heap.spaces.remove(seg)
        heap.scratch_segments = [heap.scratch_segments[0]]
        heap.scratch_segments[0].reset()
        heap.scratch = heap.scratch_segments[0]

    # -- full collection -----------------------------------------------------------

    def collect_full(self):
        """Single trace from the roots; evacuate the selected fragmented
        areas, mark everything else in place, then reclaim empty areas."""
        heap = self.heap
        if not self.enabled or heap.in_pass:
            return None
        start = self._now()
        t0 = time.perf_counter_ns()
        heap.in_pass = True
        was_safe = heap.at_safepoint
        heap.at_safepoint = True
        if self.pass_begin_hook:
            self.pass_begin_hook("full")
        try:
            record = self._full_pass(start, t0)
        finally:
            heap.in_pass = False
            heap.at_safepoint = was_safe
            self._reset_scratch()
        self.pass_log.append(record)
        self._emit(record)
        if self.pass_end_hook:
            self.pass_end_hook("full")
        return record

    def current_usages(self):
        heap = self.heap
        if self.area_usages:
            return list(self.area_usages)
        return [AreaUsage(a.area_index, a.capacity, a.capacity)
                for a in heap.old_areas if a.area_index not in heap.free_areas]

    def _full_pass(self, start, t0):
        heap = self.heap
        mem = heap.mem
        bytes_before = self.old_live_estimate + \
            sum(sp.used for sp, _ in heap.large_objects)

        selected = set(self.policy.select_evacuation_areas(self.current_usages()))
        selected = {i for i in selected
                    if 0 <= i < len(heap.old_areas) and i not in heap.free_areas}
        if heap.alloc_area is not None and heap.alloc_area.area_index in selected:
            heap.alloc_area = None

        forward = {}
        marked = []
        worklist = deque()
        live_area = {}
        live_large = set()
        target = {"area": None}
        evacuated_from = set()

        def evac_target(footprint):
            area = target["area"]
            if area is not None and area.remaining() >= footprint:
                return area
            try:
                area = heap.acquire_old_area(footprint)
            except OutOfMemory:
                return None
            if area.area_index in selected:
                return None
            target["area"] = area
            return area

        weak_now = set(heap.weak_containers)

        def visit(oop):
            if oop & 1 or oop == 0:
                return oop
            copy = forward.get(oop)
            if copy is not None:
                return copy
            flags = mem[oop + 8]
            if flags & FLAG_MARKED:
                return oop
            area = heap.in_old(oop)
            if area is not None and area.area_index in selected:
                footprint = heap.footprint(oop)
                dest = evac_target(footprint)
                if dest is not None:
                    units = heap.object_size(oop)
                    bytes_flag = bool(flags & FLAG_BYTES)
                    copy = heap._place(dest, units,
                                       units if bytes_flag else units * 8, 0,
                                       bytes_flag, (flags & 0x60) >> 5)
                    heap.set_behavior(copy, heap.behavior_of(oop))
                    mem[copy + 8] = (mem[copy + 8] & ~(FLAG_SEEN | FLAG_MARKED)) | \
                        (flags & FLAG_REMEMBERED)
                    mem[copy + 10:copy + 12] = mem[oop + 10:oop + 12]
                    body = heap.body_bytes(oop)
                    mem[copy + 16:copy + 16 + body] = mem[oop + 16:oop + 16 + body]
                    mem[oop + 8] = flags | FLAG_SEEN
                    forward[oop] = copy
                    if oop in weak_now:
                        weak_now.add(copy)
                    evacuated_from.add(area.area_index)
                    live_area[dest.area_index] = live_area.get(dest.area_index, 0) + \
                        footprint
                    worklist.append(copy)
                    return copy
                # opportunistic: no room to evacuate, mark in place instead
            mem[oop + 8] = flags | FLAG_MARKED
            marked.append(oop)
            if area is not None:
                live_area[area.area_index] = live_area.get(area.area_index, 0) + \
                    heap.footprint(oop)
            elif heap.in_large(oop) is not None:
                live_large.add(oop)
            worklist.append(oop)
            return oop

        heap.enumerate_roots(visit)
        for seg in heap.pinned_segments:
            for oop in heap.objects_in(seg):
                visit(oop)
        deferred_weak = []
        while worklist:
            obj = worklist.popleft()
            flags = mem[obj + 8]
            if flags & FLAG_BYTES:
                continue
            if obj in weak_now:
                deferred_weak.append(obj)
                continue
            base = obj + 16
            for i in range(heap.object_size(obj)):
                v = heap.read_word(base + i * 8)
                if v and not v & 1:
                    nv = visit(v)
                    if nv != v:
                        heap.write_word(base + i * 8, nv)

        # weak slots: keep reachable referents (updated), nil the rest
        is_marked = lambda o: bool(mem[o + 8] & FLAG_MARKED)
        for w in deferred_weak:
            base = w + 16
            for i in range(heap.object_size(w)):
                v = heap.read_word(base + i * 8)
                if not v or v & 1:
                    continue
                if v in forward:
                    heap.write_word(base + i * 8, forward[v])
                elif not is_marked(v):
                    heap.write_word(base + i * 8, self.nil_oop)
        new_weak = set()
        for w in heap.weak_containers:
            w2 = forward.get(w, w)
            if is_marked(w2) or w in forward:
                new_weak.add(w2)
        heap.weak_containers = new_weak

        # remap the remembered set through the forwarders
        new_remembered = set()
        for c in heap.remembered:
            c2 = forward.get(c, c)
            if c in forward or is_marked(c2):
                new_remembered.add(c2)
        heap.remembered = new_remembered

        # clear seen bits on evacuated originals before their areas go away
        for oop in forward:
            mem[oop + 8] &= ~FLAG_SEEN & 0xFF
        for oop in marked:
            mem[oop + 8] &= ~FLAG_MARKED & 0xFF

        freed = 0
        for area in list(heap.old_areas):
            idx = area.area_index
            if idx in heap.free_areas:
                continue
            if live_area.get(idx, 0) == 0:
                heap.release_area(area)
                freed += 1
        for sp, oop in list(heap.large_objects):
            if oop not in live_large:
                heap.release_large(oop)

        if self.debug_capture:
            self.last_forward = dict(forward)
            self.last_selected = set(selected)
        self.area_usages = [
            AreaUsage(a.area_index, a.capacity, live_area.get(a.area_index, 0))
            for a in heap.old_areas if a.area_index not in heap.free_areas
        ]
        old_live = sum(u.live_bytes for u in self.area_usages)
        large_live = sum(heap.footprint(o) for _, o in heap.large_objects)
        self.old_live_estimate = old_live
        self.last_full_live = old_live + large_live
        duration = (time.perf_counter_ns() - t0) // 1000
        return GCStatsRecord(
            "full", start, duration, bytes_before, old_live + large_live,
            0, 0, 0, len(heap.remembered), heap.eden_segments[0].capacity,
            areas_evacuated=len(evacuated_from))

    # -- events -----------------------------------------------------------------------

    def _emit(self, record):
        if self.event_hook:
            self.event_hook("gcPass", record.to_dict())
