#include "capsid/image.hpp"

#include <cmath>
#include <fstream>

#include "capsid/errors.hpp"

namespace capsid {

void write_pgm(const std::filesystem::path& path, const Image& img) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path.string());
    os << "P5\n" << img.width << ' ' << img.height << "\n255\n";
    std::vector<unsigned char> row(img.width);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const float v = std::min(1.0f, std::max(0.0f, img.at(x, y)));
            row[x] = static_cast<unsigned char>(std::lround(v * 255.0f));
        }
        os.write(reinterpret_cast<const char*>(row.data()), row.size());
    }
    if (!os) throw DataError("write failure: " + path.string());
}

namespace {

[[noreturn]] void pgm_error(const std::filesystem::path& path, std::istream& is,
                            const std::string& what) {
    const auto off = is.tellg();
    throw DataError("malformed PGM " + path.string() + " at byte offset " +
                    std::to_string(off == std::streampos(-1) ? -1 : static_cast<long>(off)) +
                    ": " + what);
}

// Skips whitespace and '#' comment lines between header tokens.
void skip_separators(std::istream& is) {
    int c;
    while ((c = is.peek()) != EOF) {
        if (c == '#') {
            while ((c = is.get()) != EOF && c != '\n') {
            }
        } else if (std::isspace(c)) {
            is.get();
        } else {
            break;
        }
    }
}

int read_header_int(const std::filesystem::path& path, std::istream& is,
                    const std::string& field) {
    skip_separators(is);
    int value = 0;
    bool any = false;
    int c;
    while ((c = is.peek()) != EOF && std::isdigit(c)) {
        value = value * 10 + (is.get() - '0');
        any = true;
        if (value > 1 << 20) pgm_error(path, is, field + " out of range");
    }
    if (!any) pgm_error(path, is, "expected integer for " + field);
    return value;
}

} // namespace

Image read_pgm(const std::filesystem::path& path, double nm_per_px) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open: " + path.string());
    char m0 = 0, m1 = 0;
    is.get(m0);
    is.get(m1);
    if (!is || m0 != 'P' || m1 != '5') pgm_error(path, is, "not a binary PGM (P5)");
    const int width = read_header_int(path, is, "width");
    const int height = read_header_int(path, is, "height");
    const int maxval = read_header_int(path, is, "maxval");
    if (width <= 0 || height <= 0) pgm_error(path, is, "non-positive dimensions");
    if (maxval != 255) pgm_error(path, is, "only maxval 255 is supported");
    const int sep = is.get();
    if (sep == EOF || !std::isspace(sep)) pgm_error(path, is, "missing header separator");

    Image img(width, height, nm_per_px);
    std::vector<unsigned char> raw(static_cast<size_t>(width) * height);
    is.read(reinterpret_cast<char*>(raw.data()), raw.size());
    if (static_cast<size_t>(is.gcount()) != raw.size())
        pgm_error(path, is, "truncated pixel data");
    for (size_t i = 0; i < raw.size(); ++i) img.px[i] = raw[i] / 255.0f;
    return img;
}

} // namespace capsid
