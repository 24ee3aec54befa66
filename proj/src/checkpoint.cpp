#include "drbl/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <stdexcept>

#include "drbl/io.hpp"

namespace drbl {

namespace {

void write_section(std::ostringstream& os, const char* name, const std::map<std::string, Tensor>& tensors) {
    os << "section " << name << ' ' << tensors.size() << '\n';
    char buf[40];
    for (const auto& [path, t] : tensors) {
        os << path << ' ' << t.rank();
        for (std::size_t d : t.shape()) os << ' ' << d;
        for (std::size_t i = 0; i < t.size(); ++i) {
            std::snprintf(buf, sizeof buf, " %a", t[i]);
            os << buf;
        }
        os << '\n';
    }
}

[[noreturn]] void bad(const std::string& what) { throw Error("checkpoint", "malformed checkpoint: " + what); }

std::string expect_line(std::istringstream& in, const std::string& key) {
    std::string line;
    if (!std::getline(in, line)) bad("missing '" + key + "'");
    if (line.rfind(key + " ", 0) != 0) bad("expected '" + key + "', got '" + line.substr(0, 40) + "'");
    return line.substr(key.size() + 1);
}

std::size_t expect_count(std::istringstream& in, const std::string& key) {
    const std::string text = expect_line(in, key);
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(text, &used);
    } catch (const std::exception&) {
        bad("bad " + key + " '" + text + "'");
    }
    if (used != text.size() || text.front() == '-') bad("bad " + key + " '" + text + "'");
    return static_cast<std::size_t>(v);
}

std::map<std::string, Tensor> read_section(std::istringstream& in, const std::string& name) {
    const std::string header = expect_line(in, "section");
    std::istringstream hs(header);
    std::string got;
    std::size_t count = 0;
    if (!(hs >> got >> count) || got != name) bad("expected section " + name);
    std::map<std::string, Tensor> out;
    std::string line;
    for (std::size_t k = 0; k < count; ++k) {
        if (!std::getline(in, line)) bad("truncated section " + name);
        std::istringstream ls(line);
        std::string path, token;
        std::size_t rank = 0;
        if (!(ls >> path >> rank)) bad("bad entry in " + name);
        Shape shape(rank);
        for (auto& d : shape)
            if (!(ls >> d)) bad("bad shape for " + path);
        Vector values(static_cast<Eigen::Index>(shape_size(shape)));
        for (Eigen::Index i = 0; i < values.size(); ++i) {
            if (!(ls >> token)) bad("too few values for " + path);
            char* end = nullptr;
            values(i) = std::strtod(token.c_str(), &end);
            if (*end != '\0') bad("bad value for " + path);
        }
        if (ls >> token) bad("too many values for " + path);
        out.emplace(path, Tensor(std::move(shape), std::move(values)));
    }
    return out;
}

} // namespace

std::string serialize_checkpoint(const TrainState& state) {
    std::ostringstream os;
    os << "drbl-checkpoint " << kCheckpointFormat << '\n';
    os << "artifact-version " << kArtifactVersion << '\n';
    os << "epochs-done " << state.epochs_done << '\n';
    os << "adam-step " << state.adam.t << '\n';
    os << "rng " << state.rng.state() << '\n';
    write_section(os, "params", state.params.params());
    write_section(os, "buffers", state.params.buffers());
    write_section(os, "adam-m", state.adam.m);
    write_section(os, "adam-v", state.adam.v);
    os << "end\n";
    return os.str();
}

TrainState parse_checkpoint(const std::string& text) {
    std::istringstream in(text);
    const std::string format = expect_line(in, "drbl-checkpoint");
    if (format != std::to_string(kCheckpointFormat)) bad("unsupported format " + format);
    const std::string version = expect_line(in, "artifact-version");
    if (version != kArtifactVersion) {
        throw Error("checkpoint", "checkpoint was written by version " + version + ", this build is " +
                                      kArtifactVersion);
    }
    TrainState state;
    state.epochs_done = expect_count(in, "epochs-done");
    state.adam.t = expect_count(in, "adam-step");
    state.rng.set_state(expect_line(in, "rng"));
    for (auto& [path, t] : read_section(in, "params")) state.params.add(path, std::move(t));
    for (auto& [path, t] : read_section(in, "buffers")) state.params.add_buffer(path, std::move(t));
    state.adam.m = read_section(in, "adam-m");
    state.adam.v = read_section(in, "adam-v");
    std::string line;
    if (!std::getline(in, line) || line != "end") bad("missing end marker");
    for (const auto& [path, t] : state.params.params()) {
        if (!state.adam.m.count(path) || !state.adam.v.count(path) || state.adam.m.at(path).shape() != t.shape() ||
            state.adam.v.at(path).shape() != t.shape()) {
            bad("optimizer state does not mirror parameter '" + path + "'");
        }
    }
    return state;
}

void save_checkpoint(const std::filesystem::path& path, const TrainState& state) {
    write_file_atomic(path, serialize_checkpoint(state));
}

TrainState load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(read_file(path)); }

} // namespace drbl
