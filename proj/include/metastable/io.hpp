#pragma once

#include "metastable/kernel.hpp"

#include <json.hpp>

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace metastable {

using json = nlohmann::ordered_json;
using Params = std::map<std::string, double>;

/// Doubles as JSON. Non-finite values become the strings "inf", "-inf" and
/// "nan" so that reports survive a round trip.
json number(double v);
double to_number(const json& j);

json vector_to_json(const Vector& v);
Vector vector_from_json(const json& j);

/// {"labels": [...], "partition": {"A": [...], "B": [...]}, "matrix": [[...]]}.
/// Entries may be numbers or expressions in the parameters, e.g. "1-4*a".
/// An optional "params" object holds defaults; `overrides` win.
PartitionedKernel parse_kernel(const json& j, const Params& overrides = {});
PartitionedKernel load_kernel(const std::string& path, const Params& overrides = {});
json kernel_to_json(const PartitionedKernel& k);

/// Parameters a kernel file declares, after overrides.
Params kernel_params(const json& j, const Params& overrides = {});

/// label -> weight
json measure_to_json(const PartitionedKernel& k, const DiscreteMeasure& m);
DiscreteMeasure measure_from_json(const PartitionedKernel& k, const json& j);

json read_json_file(const std::string& path);

/// A value with the formula it implements and the tolerance it is checked to.
/// tolerance 0 means exact up to rounding.
json quantity(double value, std::string_view formula, double tolerance = 0.0);

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<json>> rows;

    void add(std::vector<json> row);
    std::string to_csv() const;
    json to_json() const;
    static Table from_json(const json& j);
};

struct Check {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct ScenarioReport {
    std::string scenario;
    json inputs = json::object();
    json results = json::object();
    std::vector<Check> checks;
    json meta = json::object();  ///< seed, workers, tolerance, timing
    std::map<std::string, Table> tables;

    void check(std::string name, bool passed, std::string detail = {});
    bool passed() const;

    json to_json() const;
    static ScenarioReport from_json(const json& j);
    /// path,value lines of every scalar in the report
    std::string to_csv() const;
};

void write_text(const std::string& path, const std::string& text);

/// report.json plus one CSV per table in `dir` (created if missing).
void write_report(const ScenarioReport& r, const std::string& dir);

} // namespace metastable
