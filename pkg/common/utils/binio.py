# -*- coding: utf-8 -*-
"""Little-endian readers/writers that keep track of byte offsets."""

import struct
from common.exceptions import FormatError


class BinaryReader(object):

    def __init__(self, data):
        self.data = memoryview(data)
        self.offset = 0

    def remaining(self):
        return len(self.data) - self.offset

    def take(self, size, what="data"):
        if size < 0 or self.offset + size > len(self.data):
            raise FormatError("truncated file while reading {} ({} bytes needed, {} left)".format(
                what, size, self.remaining()), self.offset)
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt, what="field"):
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(size, what))

    def u32(self, what="u32"):
        return self.unpack('<I', what)[0]

    def u64(self, what="u64"):
        return self.unpack('<Q', what)[0]

    def expect_end(self):
        if self.remaining():
            raise FormatError("{} trailing bytes after payload".format(self.remaining()), self.offset)


def u32(value):
    return struct.pack('<I', value)


def u64(value):
    return struct.pack('<Q', value)
