#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace resmt {

/// Raw bytes of one function, pinned to a 32-bit virtual base address.
struct FunctionImage {
    std::vector<uint8_t> bytes;
    uint32_t base_addr = 0;

    uint32_t size() const { return static_cast<uint32_t>(bytes.size()); }
    uint32_t end_addr() const { return base_addr + size(); }
    bool contains(uint32_t addr) const
    {
        return addr >= base_addr && addr - base_addr < size();
    }
    uint8_t byte_at(uint32_t addr) const { return bytes.at(addr - base_addr); }
};

/// Builds an image, enforcing length > 0 and no 2^32 wrap.
FunctionImage make_image(std::vector<uint8_t> bytes, uint32_t base_addr);

/// Reads `size` bytes starting at file `offset`. The virtual base address
/// defaults to the file offset; pass base_addr when the two differ.
FunctionImage load(const std::string& path, uint64_t offset, uint64_t size);
FunctionImage load(const std::string& path, uint64_t offset, uint64_t size,
                   uint32_t base_addr);

/// "55 89 E5" -> {0x55, 0x89, 0xE5}. Tokens are whitespace-separated hex
/// byte pairs; anything else raises MalformedHex.
std::vector<uint8_t> parse_hex(const std::string& text);
std::string format_hex(const std::vector<uint8_t>& bytes);

} // namespace resmt
