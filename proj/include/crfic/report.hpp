#pragma once

#include <cstdint>
#include <fstream>
#include <string>

#include "json.hpp"

#include "crfic/common.hpp"

namespace crfic {

using Json = nlohmann::ordered_json;

// Report skeleton shared by every command. Everything set here is part of the
// reproducible payload: rerunning a command with the same config and seed must
// reproduce these bytes exactly. Wall-clock and worker details go into the
// separate "execution" section, which identity comparisons drop.
inline Json make_report(const std::string& command, Json config, std::uint64_t seed,
                        Json result) {
    Json rep;
    rep["artifact_version"] = artifact_version;
    rep["command"] = command;
    rep["seed"] = seed;
    rep["config"] = std::move(config);
    rep["config_digest"] = config_digest(rep["config"].dump());
    rep["result"] = std::move(result);
    return rep;
}

inline void attach_execution(Json& rep, unsigned workers, double elapsed_seconds) {
    Json ex;
    ex["workers"] = workers;
    ex["elapsed_seconds"] = elapsed_seconds;
    rep["execution"] = std::move(ex);
}

inline std::string serialize_report(const Json& rep) { return rep.dump(2) + "\n"; }

// The byte-comparable portion of a serialized report.
inline std::string payload_text(Json rep) {
    rep.erase("execution");
    return rep.dump(2) + "\n";
}

// Provenance lines prepended to CSV outputs, '#'-commented so the table still
// parses as plain CSV. Carries the same identifying fields as the JSON report.
inline std::string csv_metadata(const Json& rep) {
    std::string head;
    head += "# artifact_version=" + rep["artifact_version"].get<std::string>() + "\n";
    head += "# command=" + rep["command"].get<std::string>() + "\n";
    head += "# seed=" + std::to_string(rep["seed"].get<std::uint64_t>()) + "\n";
    head += "# config_digest=" + rep["config_digest"].get<std::string>() + "\n";
    head += "# config=" + rep["config"].dump() + "\n";
    return head;
}

inline void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    require(os.good(), "cannot open output file: " + path);
    os << text;
    os.flush();
    require(os.good(), "failed while writing output file: " + path);
}

inline Json read_json_file(const std::string& path) {
    std::ifstream is(path);
    require(is.good(), "cannot open input file: " + path);
    Json j;
    try {
        j = Json::parse(is);
    } catch (const nlohmann::json::parse_error& e) {
        throw invalid_argument_error("malformed JSON in " + path + ": " + e.what());
    }
    return j;
}

} // namespace crfic
