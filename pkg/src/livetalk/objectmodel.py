"""Tagged values, object headers, heap spaces, and the write barrier.

Everything the collectors and the execution engine touch lives in one byte
arena. An oop is either an immediate small integer (low bit set, 63-bit
two's-complement payload) or the 16-byte-aligned address of an object
header inside a registered space.

Object layout, all little-endian:

    [size extension: u32]   only when the unit count exceeds 255; occupies
                            the last 4 bytes of a 16-byte block that
                            precedes the header
    [behavior:  u64]        oop of the object's behavior anchor
    [flags:     u8]         see FLAG_* below; bits 5-6 hold the age
    [smallSize: u8]         unit count when FLAG_SMALL is set
    [hash:      u16]        identity hash, assigned at allocation
    [reserved:  u32]
    [body ...]              slots (8 bytes each) or raw bytes, zero-filled

Units are slots for reference objects and bytes for bytes objects.
"""


import struct

from .errors import (
    AlignmentError,
    HostValueEscape,
    IndexOutOfBounds,
    NotAHeapObject,
    NotAtSafepoint,
    OutOfMemory,
    OverflowRange,
    WrongSpace,
)

GRAIN = 16
HEADER_BYTES = 16
SLOT_BYTES = 8
WORD_MASK = (1 << 64) - 1

SMI_MIN = -(1 << 62)
SMI_MAX = (1 << 62) - 1

FLAG_SMALL = 0x01
FLAG_SEEN = 0x02
FLAG_REMEMBERED = 0x04
FLAG_MARKED = 0x08
FLAG_BYTES = 0x10
AGE_SHIFT = 5
AGE_MASK = 0x60
MAX_AGE = 3

FLAGS_OFFSET = 8
SMALL_SIZE_OFFSET = 9
HASH_OFFSET = 10

_U64 = struct.Struct("<Q")
_U32 = struct.Struct("<I")
_U16 = struct.Struct("<H")


# -- immediate tagging ---------------------------------------------------------

def tag_small_integer(v):
    """Encode a signed integer as an immediate oop."""
    if v < SMI_MIN or v > SMI_MAX:
        raise OverflowRange("value out of immediate range: %d" % v)
    return ((v << 1) | 1) & WORD_MASK


def untag_small_integer(oop):
    """Arithmetic right shift by one of the 64-bit word."""
    if oop & (1 << 63):
        return (oop >> 1) - (1 << 63)
    return oop >> 1


def is_small_integer(oop):
    return oop & 1 == 1


def is_heap_ref(oop):
    return oop != 0 and oop & 1 == 0


class Space:
    """A contiguous region with a bump cursor. base <= next <= limit."""

    __slots__ = ("name", "kind", "base", "limit", "next", "pinned", "area_index")

    def __init__(self, name, kind, base, limit):
        self.name = name
        self.kind = kind  # eden | survivor | old | large | scratch | pinned
        self.base = base
        self.limit = limit
        self.next = base
        self.pinned = kind == "pinned"
        self.area_index = None

    @property
    def capacity(self):
        return self.limit - self.base

    @property
    def used(self):
        return self.next - self.base

    def remaining(self):
        return self.limit - self.next

    def contains(self, addr):
        return self.base <= addr < self.limit

    def reset(self):
        self.next = self.base

    def __repr__(self):
        return "<Space %s [%#x..%#x) next=%#x>" % (self.name, self.base, self.limit, self.next)


class ForwardersTable:
    """External side table: one oop slot per 16-byte grain of a space.

    Indices are 1-based. Entries never touch the original object's bytes.
    """

    def __init__(self, space_base, capacity):
        self.space_base = space_base
        self.entries = [0] * (capacity // GRAIN + 1)

    def index_of(self, addr):
        if addr % GRAIN:
            raise AlignmentError("unaligned address %#x" % addr)
        offset = addr - self.space_base
        if offset < 0 or offset // GRAIN + 1 >= len(self.entries) + 1:
            raise WrongSpace("address %#x outside covered space" % addr)
        return offset // GRAIN + 1

    def at(self, index):
        return self.entries[index - 1]

    def at_put(self, index, oop):
        self.entries[index - 1] = oop


class Heap:
    """Owns the arena, all spaces, the remembered set, and root providers."""

    def __init__(self, eden_size=256 * 1024, survivor_size=64 * 1024,
                 old_area_size=64 * 1024, large_threshold=16 * 1024,
                 scratch_size=64 * 1024, max_bytes=256 * 1024 * 1024):
        for n, v in (("eden", eden_size), ("survivor", survivor_size),
                     ("old area", old_area_size), ("scratch", scratch_size)):
            if v <= 0 or v % GRAIN:
                raise ValueError("%s size must be a positive multiple of 16" % n)
        self.mem = bytearray(2 * 1024 * 1024)
        # Address 0 stays unmapped so a zero word is never a valid reference.
        self._brk = GRAIN
        self.max_bytes = max_bytes

        self.eden_size = eden_size
        self.survivor_size = survivor_size
        self.old_area_size = old_area_size
        self.large_threshold = large_threshold
        self.scratch_size = scratch_size

        self.spaces = []
        self.eden_segments = [self._carve("eden", "eden", eden_size)]
        self.from_space = self._carve("from", "survivor", survivor_size)
        self.to_space = self._carve("to", "survivor", survivor_size)
        self.scratch = self._carve("gcScratch", "scratch", scratch_size)
        self.scratch_segments = [self.scratch]
        self.pinned_space = self._carve("pinned", "pinned", 64 * 1024)
        self.pinned_segments = [self.pinned_space]

        self.old_areas = []        # all carved old areas, by area_index
        self.free_areas = []       # indices available for reuse
        self.alloc_area = None     # current tenure target
        self.large_objects = []    # (space, oop) per large-object segment

        self.remembered = set()
        self.weak_containers = set()
        self.root_providers = []

        self.in_pass = False
        self.gc_disabled = 0
        self.at_safepoint = True
        self.eden_full_hook = None   # set by the memory manager
        self.hash_seed = 0x9E37
        self._next_hash = 1

    # -- arena ------------------------------------------------------------

    def _carve(self, name, kind, size):
        base = self._brk
        end = base + size
        if end > self.max_bytes:
            raise OutOfMemory("arena limit of %d bytes reached" % self.max_bytes)
        while end > len(self.mem):
            self.mem.extend(b"\x00" * max(len(self.mem), end - len(self.mem)))
        self._brk = end
        sp = Space(name, kind, base, end)
        self.spaces.append(sp)
        return sp

    def space_of(self, addr):
        for sp in self.spaces:
            if sp.contains(addr):
                return sp
        return None

    # -- raw access --------------------------------------------------------

    def read_word(self, addr):
        return _U64.unpack_from(self.mem, addr)[0]

    def write_word(self, addr, value):
        _U64.pack_into(self.mem, addr, value & WORD_MASK)

    def read_u32(self, addr):
        return _U32.unpack_from(self.mem, addr)[0]

    def write_u32(self, addr, value):
        _U32.pack_into(self.mem, addr, value & 0xFFFFFFFF)

    def read_byte(self, addr):
        return self.mem[addr]

    def write_byte(self, addr, value):
        self.mem[addr] = value & 0xFF

    # -- headers -----------------------------------------------------------

    def behavior_of(self, oop):
        return _U64.unpack_from(self.mem, oop)[0]

    def set_behavior(self, oop, behavior_oop):
        _U64.pack_into(self.mem, oop, behavior_oop)

    def flags_of(self, oop):
        return self.mem[oop + FLAGS_OFFSET]

    def set_flags(self, oop, flags):
        self.mem[oop + FLAGS_OFFSET] = flags & 0xFF

    def age_of(self, oop):
        return (self.mem[oop + FLAGS_OFFSET] & AGE_MASK) >> AGE_SHIFT

    def set_age(self, oop, age):
        f = self.mem[oop + FLAGS_OFFSET]
        self.mem[oop + FLAGS_OFFSET] = (f & ~AGE_MASK) | ((min(age, MAX_AGE) & 3) << AGE_SHIFT)

    def hash_of(self, oop):
        return _U16.unpack_from(self.mem, oop + HASH_OFFSET)[0]

    def is_bytes_object(self, oop):
        return bool(self.mem[oop + FLAGS_OFFSET] & FLAG_BYTES)

    def object_size(self, oop):
        """Unit count: slots for reference objects, bytes for bytes objects."""
        if oop & 1:
            raise NotAHeapObject("immediate %#x has no header" % oop)
        flags = self.mem[oop + FLAGS_OFFSET]
        if flags & FLAG_SMALL:
            return self.mem[oop + SMALL_SIZE_OFFSET]
        return _U32.unpack_from(self.mem, oop - 4)[0]

    def body_bytes(self, oop):
        size = self.object_size(oop)
        if self.mem[oop + FLAGS_OFFSET] & FLAG_BYTES:
            return size
        return size * SLOT_BYTES

    def footprint(self, oop):
        """Allocation footprint including header and any extension block."""
        body = _round16(self.body_bytes(oop))
        if self.mem[oop + FLAGS_OFFSET] & FLAG_SMALL:
            return HEADER_BYTES + body
        return GRAIN + HEADER_BYTES + body

    def start_of(self, oop):
        """First arena byte of the allocation (extension block included)."""
        if self.mem[oop + FLAGS_OFFSET] & FLAG_SMALL:
            return oop
        return oop - GRAIN

    # -- slots and bytes -----------------------------------------------------

    def read_slot(self, oop, index):
        """1-based unchecked slot read."""
        return _U64.unpack_from(self.mem, oop + HEADER_BYTES + (index - 1) * SLOT_BYTES)[0]

    def write_slot_raw(self, oop, index, value):
        """1-based unchecked slot write, no barrier. GC-internal use only."""
        _U64.pack_into(self.mem, oop + HEADER_BYTES + (index - 1) * SLOT_BYTES, value)

    def byte_at(self, oop, index):
        return self.mem[oop + HEADER_BYTES + index - 1]

    def byte_at_put(self, oop, index, value):
        self.mem[oop + HEADER_BYTES + index - 1] = value & 0xFF

    def bytes_of(self, oop):
        start = oop + HEADER_BYTES
        return bytes(self.mem[start:start + self.body_bytes(oop)])

    def set_bytes(self, oop, data):
        start = oop + HEADER_BYTES
        self.mem[start:start + len(data)] = data

    # -- classification ------------------------------------------------------

    def in_young(self, addr):
        for seg in self.eden_segments:
            if seg.contains(addr):
                return True
        return self.from_space.contains(addr) or self.to_space.contains(addr)

    def in_eden(self, addr):
        for seg in self.eden_segments:
            if seg.contains(addr):
                return True
        return False

    def in_scratch(self, addr):
        for seg in self.scratch_segments:
            if seg.contains(addr):
                return True
        return False

    def in_old(self, addr):
        for area in self.old_areas:
            if area.contains(addr):
                return area
        return None

    def in_large(self, addr):
        for sp, oop in self.large_objects:
            if sp.contains(addr):
                return sp
        return None

    def is_tenured_container(self, addr):
        """True for objects whose young references must be remembered."""
        if self.in_old(addr) is not None:
            return True
        if self.in_large(addr) is not None:
            return True
        return self.pinned_contains(addr)

    def pinned_contains(self, addr):
        for seg in self.pinned_segments:
            if seg.contains(addr):
                return True
        return False

    # -- allocation ------------------------------------------------------------

    def allocate(self, units, behavior_oop, bytes_flag=False):
        """Bump-allocate a zero-filled object in the appropriate space."""
        body = units if bytes_flag else units * SLOT_BYTES
        if self.in_pass:
            return self._alloc_in_scratch(units, body, behavior_oop, bytes_flag)
        if body >= self.large_threshold:
            return self._alloc_large(units, body, behavior_oop, bytes_flag)
        footprint = _alloc_size(units, body)
        eden = self.eden_segments[-1]
        if eden.remaining() < footprint:
            if self.gc_disabled or self.eden_full_hook is None:
                eden = self._grow_eden(footprint)
            else:
                self.eden_full_hook()
                eden = self.eden_segments[-1]
                if eden.remaining() < footprint:
                    # object larger than a clean eden: route to the large zone
                    return self._alloc_large(units, body, behavior_oop, bytes_flag)
        return self._place(eden, units, body, behavior_oop, bytes_flag, age=0)

    def allocate_pinned(self, units, behavior_oop, bytes_flag=False):
        body = units if bytes_flag else units * SLOT_BYTES
        footprint = _alloc_size(units, body)
        seg = self.pinned_segments[-1]
        if seg.remaining() < footprint:
            seg = self._carve("pinned+%d" % len(self.pinned_segments), "pinned",
                              max(64 * 1024, _round16(footprint)))
            self.pinned_segments.append(seg)
        return self._place(seg, units, body, behavior_oop, bytes_flag, age=MAX_AGE)

    def allocate_old(self, units, behavior_oop, bytes_flag=False):
        """Tenure-time allocation; used by the collectors."""
        body = units if bytes_flag else units * SLOT_BYTES
        sp = self._old_space_for(_alloc_size(units, body))
        return self._place(sp, units, body, behavior_oop, bytes_flag, age=MAX_AGE)

    def _alloc_in_scratch(self, units, body, behavior_oop, bytes_flag):
        footprint = _alloc_size(units, body)
        seg = self.scratch_segments[-1]
        if seg.remaining() < footprint:
            seg = self._carve("gcScratch+%d" % len(self.scratch_segments), "scratch",
                              max(self.scratch_size, _round16(footprint)))
            self.scratch_segments.append(seg)
        return self._place(seg, units, body, behavior_oop, bytes_flag, age=0)

    def _alloc_large(self, units, body, behavior_oop, bytes_flag):
        size = _alloc_size(units, body)
        sp = self._carve("large+%d" % len(self.large_objects), "large", _round16(size))
        oop = self._place(sp, units, body, behavior_oop, bytes_flag, age=MAX_AGE)
        self.large_objects.append((sp, oop))
        return oop

    def _grow_eden(self, needed):
        seg = self._carve("eden+%d" % len(self.eden_segments), "eden",
                          max(self.eden_size, _round16(needed)))
        self.eden_segments.append(seg)
        return seg

    def _old_space_for(self, footprint):
        if self.alloc_area is not None and self.alloc_area.remaining() >= footprint:
            return self.alloc_area
        self.alloc_area = self.acquire_old_area(footprint)
        return self.alloc_area

    def acquire_old_area(self, needed=0):
        size = max(self.old_area_size, _round16(needed))
        for i, idx in enumerate(self.free_areas):
            area = self.old_areas[idx]
            if area.capacity >= size:
                self.free_areas.pop(i)
                area.reset()
                return area
        area = self._carve("oldArea%d" % len(self.old_areas), "old", size)
        area.area_index = len(self.old_areas)
        self.old_areas.append(area)
        return area

    def release_area(self, area):
        area.reset()
        self.mem[area.base:area.limit] = b"\x00" * area.capacity
        if area is self.alloc_area:
            self.alloc_area = None
        if area.area_index not in self.free_areas:
            self.free_areas.append(area.area_index)

    def release_large(self, oop):
        for i, (sp, o) in enumerate(self.large_objects):
            if o == oop:
                self.large_objects.pop(i)
                self.spaces.remove(sp)
                return
        raise WrongSpace("%#x is not a large object" % oop)

    def _place(self, space, units, body, behavior_oop, bytes_flag, age):
        small = units <= 255
        footprint = _alloc_size(units, body)
        start = space.next
        if start + footprint > space.limit:
            raise OutOfMemory("space %s exhausted" % space.name)
        space.next = start + footprint
        oop = start if small else start + GRAIN
        self.mem[start:start + footprint] = b"\x00" * footprint
        flags = (FLAG_SMALL if small else 0) | (FLAG_BYTES if bytes_flag else 0)
        flags |= (min(age, MAX_AGE) & 3) << AGE_SHIFT
        _U64.pack_into(self.mem, oop, behavior_oop)
        self.mem[oop + FLAGS_OFFSET] = flags
        if small:
            self.mem[oop + SMALL_SIZE_OFFSET] = units
        else:
            _U32.pack_into(self.mem, oop - 4, units)
        h = (self._next_hash * 0x9E3779B1 + self.hash_seed) & 0xFFFF
        self._next_hash += 1
        _U16.pack_into(self.mem, oop + HASH_OFFSET, h or 1)
        return oop

    # -- forwarding ---------------------------------------------------------

    def forwarding_index_of(self, oop, space):
        """1-based grain index of oop within space."""
        if not space.contains(oop):
            raise WrongSpace("%#x not in %s" % (oop, space.name))
        if oop % GRAIN:
            raise AlignmentError("unaligned oop %#x" % oop)
        return (oop - space.base) // GRAIN + 1

    # -- write barrier --------------------------------------------------------

    def write_barrier_store(self, container, index, value):
        """Checked 1-based slot store with old-to-young remembering."""
        if not is_heap_ref(container):
            raise NotAHeapObject("store into immediate %#x" % container)
        if not isinstance(value, int):
            raise HostValueEscape("only oops can be stored into the heap")
        flags = self.mem[container + FLAGS_OFFSET]
        if flags & FLAG_BYTES:
            raise IndexOutOfBounds("slot store into a bytes object")
        if index < 1 or index > self.object_size(container):
            raise IndexOutOfBounds("slot %d of %d" % (index, self.object_size(container)))
        if self.in_pass and value & 1 == 0 and value != 0 and \
                self.in_scratch(value) and not self.in_scratch(container):
            raise WrongSpace("a pass-local object may not escape the scratch space")
        _U64.pack_into(self.mem, container + HEADER_BYTES + (index - 1) * SLOT_BYTES, value)
        if value & 1 == 0 and value != 0 and not flags & FLAG_REMEMBERED:
            if self.in_young(value) and self.is_tenured_container(container):
                self.remembered.add(container)
                self.mem[container + FLAGS_OFFSET] = flags | FLAG_REMEMBERED

    def store_slot_unchecked(self, container, index, value):
        """Barriered slot store without the bounds check (compiler-verified
        indices and _basicAt:put:)."""
        _U64.pack_into(self.mem, container + HEADER_BYTES + (index - 1) * SLOT_BYTES, value)
        flags = self.mem[container + FLAGS_OFFSET]
        if value & 1 == 0 and value != 0 and not flags & FLAG_REMEMBERED:
            if self.in_young(value) and self.is_tenured_container(container):
                self.remembered.add(container)
                self.mem[container + FLAGS_OFFSET] = flags | FLAG_REMEMBERED

    def remember(self, container):
        flags = self.mem[container + FLAGS_OFFSET]
        if not flags & FLAG_REMEMBERED:
            self.remembered.add(container)
            self.mem[container + FLAGS_OFFSET] = flags | FLAG_REMEMBERED

    def forget(self, container):
        self.remembered.discard(container)
        self.mem[container + FLAGS_OFFSET] &= ~FLAG_REMEMBERED & 0xFF

    # -- weak containers -------------------------------------------------------

    def register_weak(self, oop):
        self.weak_containers.add(oop)

    def unregister_weak(self, oop):
        self.weak_containers.discard(oop)

    # -- roots ----------------------------------------------------------------

    def add_root_provider(self, provider):
        self.root_providers.append(provider)

    def enumerate_roots(self, visitor):
        """Feed every root slot to visitor; providers write updates back."""
        if not self.at_safepoint:
            raise NotAtSafepoint("root enumeration outside a safepoint")
        for provider in self.root_providers:
            provider(visitor)

    # -- object iteration --------------------------------------------------------

    def objects_in(self, space):
        """Yield the oop of every object allocated in a space, in order.

        Allocations are contiguous from base to next. A small object starts
        with its behavior word (never zero); a large object's allocation
        starts with the zero-padded extension block, so a zero first word
        means the header sits one grain further in.
        """
        addr = space.base
        limit = space.next
        mem = self.mem
        while addr < limit:
            if _U64.unpack_from(mem, addr)[0] == 0:
                addr += GRAIN  # extension block of a large object
            yield addr
            flags = mem[addr + FLAGS_OFFSET]
            if flags & FLAG_SMALL:
                units = mem[addr + SMALL_SIZE_OFFSET]
            else:
                units = _U32.unpack_from(mem, addr - 4)[0]
            body = units if flags & FLAG_BYTES else units * SLOT_BYTES
            addr += HEADER_BYTES + _round16(body)

    def young_objects(self):
        for seg in self.eden_segments:
            yield from self.objects_in(seg)
        yield from self.objects_in(self.from_space)

    # -- validation ---------------------------------------------------------------

    def check_headers(self, behavior_checker=None):
        """Walk every live space and verify header sanity. Returns count."""
        count = 0
        spaces = list(self.eden_segments) + [self.from_space] + \
            [self.old_areas[i] for i in range(len(self.old_areas))
             if i not in self.free_areas] + \
            [sp for sp, _ in self.large_objects] + list(self.pinned_segments)
        for sp in spaces:
            for oop in self.objects_in(sp):
                beh = self.behavior_of(oop)
                if not is_heap_ref(beh) or self.space_of(beh) is None:
                    raise WrongSpace("object %#x has invalid behavior %#x" % (oop, beh))
                if behavior_checker is not None and not behavior_checker(beh):
                    raise WrongSpace("object %#x behavior %#x unknown" % (oop, beh))
                end = oop + HEADER_BYTES + _round16(self.body_bytes(oop))
                if end > sp.limit:
                    raise WrongSpace("object %#x overruns %s" % (oop, sp.name))
                count += 1
        return count


def _round16(n):
    return (n + GRAIN - 1) & ~(GRAIN - 1)


def _alloc_size(units, body):
    if units <= 255:
        return HEADER_BYTES + _round16(body)
    return GRAIN + HEADER_BYTES + _round16(body)
