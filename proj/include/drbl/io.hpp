#ifndef DRBL_IO_HPP
#define DRBL_IO_HPP

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "drbl/errors.hpp"

namespace drbl {

/// Writes to `<path>.tmp` and renames over `path`.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("io", "cannot write '" + tmp.string() + "'");
        out << content;
        out.flush();
        if (!out) throw Error("io", "failed writing '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("io", "cannot open '" + path.string() + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

} // namespace drbl

#endif // DRBL_IO_HPP
