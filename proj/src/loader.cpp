#include "resmt/loader.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "resmt/errors.hpp"

namespace resmt {

FunctionImage make_image(std::vector<uint8_t> bytes, uint32_t base_addr)
{
    if (bytes.empty())
        fail(Err::RangeOutOfBounds, "function image must not be empty");
    uint64_t end = uint64_t(base_addr) + bytes.size();
    if (end > (uint64_t(1) << 32))
        fail(Err::RangeOutOfBounds, "image wraps past the 32-bit address space");
    return FunctionImage{std::move(bytes), base_addr};
}

FunctionImage load(const std::string& path, uint64_t offset, uint64_t size,
                   uint32_t base_addr)
{
    std::ifstream f(path, std::ios::binary);
    if (!f)
        fail(Err::FileNotFound, path);
    f.seekg(0, std::ios::end);
    uint64_t file_size = static_cast<uint64_t>(f.tellg());
    if (size == 0)
        fail(Err::RangeOutOfBounds, "function size must be > 0");
    if (offset > file_size || size > file_size - offset) {
        std::ostringstream msg;
        msg << "offset " << offset << " + size " << size << " exceeds file of "
            << file_size << " bytes";
        fail(Err::RangeOutOfBounds, msg.str());
    }
    std::vector<uint8_t> bytes(size);
    f.seekg(static_cast<std::streamoff>(offset));
    f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
    if (!f)
        fail(Err::FileNotFound, "read failed: " + path);
    return make_image(std::move(bytes), base_addr);
}

FunctionImage load(const std::string& path, uint64_t offset, uint64_t size)
{
    if (offset > 0xFFFFFFFFull)
        fail(Err::RangeOutOfBounds, "offset does not fit a 32-bit base address");
    return load(path, offset, size, static_cast<uint32_t>(offset));
}

static int hex_digit(char ch)
{
    if (ch >= '0' && ch <= '9')
        return ch - '0';
    if (ch >= 'a' && ch <= 'f')
        return ch - 'a' + 10;
    if (ch >= 'A' && ch <= 'F')
        return ch - 'A' + 10;
    return -1;
}

std::vector<uint8_t> parse_hex(const std::string& text)
{
    std::vector<uint8_t> out;
    std::istringstream in(text);
    std::string tok;
    while (in >> tok) {
        if (tok.size() != 2)
            fail(Err::MalformedHex, "token '" + tok + "' is not a hex byte pair");
        int hi = hex_digit(tok[0]), lo = hex_digit(tok[1]);
        if (hi < 0 || lo < 0)
            fail(Err::MalformedHex, "token '" + tok + "' is not a hex byte pair");
        out.push_back(static_cast<uint8_t>(hi << 4 | lo));
    }
    return out;
}

std::string format_hex(const std::vector<uint8_t>& bytes)
{
    static const char* digits = "0123456789ABCDEF";
    std::string out;
    out.reserve(bytes.size() * 3);
    for (size_t i = 0; i < bytes.size(); ++i) {
        if (i)
            out.push_back(' ');
        out.push_back(digits[bytes[i] >> 4]);
        out.push_back(digits[bytes[i] & 0xF]);
    }
    return out;
}

} // namespace resmt
