#include "metastable/io.hpp"

#include "metastable/errors.hpp"
#include "metastable/expression.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

namespace metastable {

json number(double v)
{
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

double to_number(const json& j)
{
    if (j.is_number()) return j.get<double>();
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    }
    throw Error(ErrorCode::ParseError, "expected a number, got " + j.dump());
}

json vector_to_json(const Vector& v)
{
    json a = json::array();
    for (Index i = 0; i < v.size(); ++i) a.push_back(number(v[i]));
    return a;
}

Vector vector_from_json(const json& j)
{
    if (!j.is_array()) throw Error(ErrorCode::ParseError, "expected an array");
    Vector v(static_cast<Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Index>(i)] = to_number(j[i]);
    return v;
}

namespace {

std::string label_of(const json& j)
{
    if (j.is_string()) return j.get<std::string>();
    if (j.is_number_integer()) return std::to_string(j.get<long long>());
    throw Error(ErrorCode::ParseError, "labels must be strings or integers, got " + j.dump());
}

const json& member(const json& j, const char* key)
{
    if (!j.is_object() || !j.contains(key)) {
        throw Error(ErrorCode::ParseError, std::string("missing \"") + key + "\"");
    }
    return j.at(key);
}

} // namespace

Params kernel_params(const json& j, const Params& overrides)
{
    Params p;
    if (j.is_object() && j.contains("params")) {
        const auto& ps = j.at("params");
        if (!ps.is_object()) throw Error(ErrorCode::ParseError, "\"params\" must be an object");
        for (const auto& [name, v] : ps.items()) p[name] = to_number(v);
    }
    for (const auto& [name, v] : overrides) p[name] = v;
    return p;
}

PartitionedKernel parse_kernel(const json& j, const Params& overrides)
{
    const Params params = kernel_params(j, overrides);
    const json& rows = member(j, "matrix");
    if (!rows.is_array() || rows.empty()) throw Error(ErrorCode::ParseError, "\"matrix\" must be a nonempty array");
    const auto n = static_cast<Index>(rows.size());

    std::vector<std::string> labels;
    if (j.contains("labels")) {
        for (const auto& l : j.at("labels")) labels.push_back(label_of(l));
        if (static_cast<Index>(labels.size()) != n) {
            throw Error(ErrorCode::ParseError, "one label per matrix row is required");
        }
    } else {
        for (Index i = 0; i < n; ++i) labels.push_back(std::to_string(i + 1));
    }

    Matrix m(n, n);
    for (Index i = 0; i < n; ++i) {
        const json& row = rows[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Index>(row.size()) != n) {
            throw Error(ErrorCode::ParseError, "row " + std::to_string(i + 1) + " must have " + std::to_string(n) + " entries");
        }
        for (Index c = 0; c < n; ++c) {
            const json& e = row[static_cast<std::size_t>(c)];
            if (e.is_number()) {
                m(i, c) = e.get<double>();
            } else if (e.is_string()) {
                m(i, c) = evaluate_constant(e.get<std::string>(), params);
            } else {
                throw Error(ErrorCode::ParseError, "matrix entries must be numbers or expressions");
            }
        }
    }

    std::vector<Side> partition(static_cast<std::size_t>(n));
    std::vector<bool> seen(static_cast<std::size_t>(n), false);
    const json& part = member(j, "partition");
    for (const auto& [key, side] : {std::pair{"A", Side::A}, std::pair{"B", Side::B}}) {
        for (const auto& l : member(part, key)) {
            const auto name = label_of(l);
            const auto it = std::find(labels.begin(), labels.end(), name);
            if (it == labels.end()) throw Error(ErrorCode::ParseError, "unknown label \"" + name + "\" in partition");
            const auto idx = static_cast<std::size_t>(it - labels.begin());
            if (seen[idx]) throw Error(ErrorCode::ParseError, "label \"" + name + "\" listed twice in partition");
            seen[idx] = true;
            partition[idx] = side;
        }
    }
    for (std::size_t i = 0; i < seen.size(); ++i) {
        if (!seen[i]) throw Error(ErrorCode::ParseError, "label \"" + labels[i] + "\" is in neither A nor B");
    }
    return PartitionedKernel::validate(std::move(m), partition, labels);
}

json read_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ParseError, "cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, path + ": " + e.what());
    }
}

PartitionedKernel load_kernel(const std::string& path, const Params& overrides)
{
    return parse_kernel(read_json_file(path), overrides);
}

json kernel_to_json(const PartitionedKernel& k)
{
    json j;
    j["labels"] = k.labels();
    json a = json::array(), b = json::array();
    for (Index i : k.indices(Side::A)) a.push_back(k.labels()[static_cast<std::size_t>(i)]);
    for (Index i : k.indices(Side::B)) b.push_back(k.labels()[static_cast<std::size_t>(i)]);
    j["partition"] = {{"A", a}, {"B", b}};
    json rows = json::array();
    for (Index i = 0; i < k.size(); ++i) rows.push_back(vector_to_json(k.matrix().row(i).transpose()));
    j["matrix"] = rows;
    return j;
}

json measure_to_json(const PartitionedKernel& k, const DiscreteMeasure& m)
{
    json j = json::object();
    for (Index i = 0; i < m.size(); ++i) {
        j[k.labels()[static_cast<std::size_t>(m.support[static_cast<std::size_t>(i)])]] = number(m.weights[i]);
    }
    return j;
}

DiscreteMeasure measure_from_json(const PartitionedKernel& k, const json& j)
{
    if (!j.is_object()) throw Error(ErrorCode::ParseError, "a measure is a label -> weight object");
    std::vector<Index> support;
    Vector w(static_cast<Index>(j.size()));
    Index c = 0;
    for (const auto& [label, v] : j.items()) {
        const auto& ls = k.labels();
        const auto it = std::find(ls.begin(), ls.end(), label);
        if (it == ls.end()) throw Error(ErrorCode::ParseError, "unknown label \"" + label + "\"");
        support.push_back(static_cast<Index>(it - ls.begin()));
        w[c++] = to_number(v);
    }
    return make_measure(std::move(support), std::move(w), false);
}

json quantity(double value, std::string_view formula, double tolerance)
{
    return {{"value", number(value)}, {"formula", std::string(formula)}, {"tolerance", number(tolerance)}};
}

void Table::add(std::vector<json> row)
{
    if (row.size() != columns.size()) throw Error(ErrorCode::InvalidInput, "row width does not match the columns");
    rows.push_back(std::move(row));
}

namespace {

std::string csv_cell(const json& v)
{
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s.find_first_of(",\"\n") == std::string::npos) return s;
        std::string q = "\"";
        for (char ch : s) {
            if (ch == '"') q += '"';
            q += ch;
        }
        return q + '"';
    }
    if (v.is_null()) return "";
    return v.dump();
}

void flatten(const json& j, const std::string& path, std::ostringstream& out)
{
    if (j.is_object()) {
        for (const auto& [k, v] : j.items()) flatten(v, path.empty() ? k : path + "." + k, out);
    } else if (j.is_array()) {
        for (std::size_t i = 0; i < j.size(); ++i) flatten(j[i], path + "[" + std::to_string(i) + "]", out);
    } else {
        out << csv_cell(path) << ',' << csv_cell(j) << '\n';
    }
}

} // namespace

std::string Table::to_csv() const
{
    std::ostringstream out;
    for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << csv_cell(columns[i]);
    out << '\n';
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << csv_cell(r[i]);
        out << '\n';
    }
    return out.str();
}

json Table::to_json() const
{
    return {{"columns", columns}, {"rows", rows}};
}

Table Table::from_json(const json& j)
{
    Table t;
    t.columns = j.at("columns").get<std::vector<std::string>>();
    for (const auto& r : j.at("rows")) t.rows.push_back(r.get<std::vector<json>>());
    return t;
}

void ScenarioReport::check(std::string name, bool ok, std::string detail)
{
    checks.push_back({std::move(name), ok, std::move(detail)});
}

bool ScenarioReport::passed() const
{
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

json ScenarioReport::to_json() const
{
    json j;
    j["scenario"] = scenario;
    j["passed"] = passed();
    j["inputs"] = inputs;
    j["results"] = results;
    json cs = json::array();
    for (const auto& c : checks) cs.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    j["checks"] = cs;
    json ts = json::object();
    for (const auto& [name, t] : tables) ts[name] = t.to_json();
    j["tables"] = ts;
    j["meta"] = meta;
    return j;
}

ScenarioReport ScenarioReport::from_json(const json& j)
{
    ScenarioReport r;
    r.scenario = j.at("scenario").get<std::string>();
    r.inputs = j.at("inputs");
    r.results = j.at("results");
    for (const auto& c : j.at("checks")) {
        r.checks.push_back({c.at("name").get<std::string>(), c.at("passed").get<bool>(), c.at("detail").get<std::string>()});
    }
    if (j.contains("tables")) {
        for (const auto& [name, t] : j.at("tables").items()) r.tables[name] = Table::from_json(t);
    }
    r.meta = j.value("meta", json::object());
    return r;
}

std::string ScenarioReport::to_csv() const
{
    std::ostringstream out;
    out << "path,value\n";
    json j = to_json();
    j.erase("tables");
    flatten(j, "", out);
    return out.str();
}

void write_text(const std::string& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::InvalidInput, "cannot write " + path);
    out << text;
}

void write_report(const ScenarioReport& r, const std::string& dir)
{
    std::filesystem::create_directories(dir);
    const std::filesystem::path d(dir);
    write_text((d / "report.json").string(), r.to_json().dump(2) + "\n");
    for (const auto& [name, t] : r.tables) write_text((d / (name + ".csv")).string(), t.to_csv());
}

} // namespace metastable
