#include <fstream>
#include <iomanip>
#include <sstream>

#include "rmlab/harness.hpp"

namespace rmlab {

using nlohmann::json;

std::string hash_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("missing input: " + path);
    std::stringstream buf;
    buf << is.rdbuf();
    const std::uint64_t h = fnv1a(buf.str());
    std::ostringstream os;
    os << "fnv64:" << std::hex << std::setfill('0') << std::setw(16) << h;
    return os.str();
}

void write_manifest(const std::string& path, const RunManifest& m) {
    json j{{"run_id", m.run_id},
           {"subcommand", m.subcommand},
           {"command", m.command},
           {"seed", m.seed},
           {"config", m.config},
           {"config_provenance", config_provenance()},
           {"args", m.args},
           {"inputs", m.inputs},
           {"outputs", m.outputs},
           {"duration_ms", m.duration_ms}};
    std::ofstream os(path);
    if (!os) throw Error("cannot write " + path);
    os << j.dump(2) << '\n';
}

RunManifest read_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("missing input: " + path);
    json j = json::parse(is);
    RunManifest m;
    m.run_id = j.at("run_id").get<std::string>();
    m.subcommand = j.at("subcommand").get<std::string>();
    m.command = j.at("command").get<std::vector<std::string>>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config = j.at("config");
    m.args = j.at("args").get<std::map<std::string, std::string>>();
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    m.duration_ms = j.at("duration_ms").get<double>();
    return m;
}

}  // namespace rmlab
