#include "cmap/schema.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <regex>

namespace cmap {

namespace detail {
extern const std::pair<std::string_view, std::string_view> kSchemaSources[];
extern const std::size_t kSchemaCount;
}  // namespace detail

namespace {

bool has_type(const json& v, const std::string& type) {
    if (type == "null") return v.is_null();
    if (type == "boolean") return v.is_boolean();
    if (type == "object") return v.is_object();
    if (type == "array") return v.is_array();
    if (type == "string") return v.is_string();
    if (type == "number") return v.is_number();
    if (type == "integer") {
        if (v.is_number_integer()) return true;
        if (v.is_number_float()) {
            const double d = v.get<double>();
            return std::isfinite(d) && std::floor(d) == d;
        }
        return false;
    }
    throw Error("schema uses unsupported type '" + type + "'");
}

class Validator {
  public:
    explicit Validator(const json& root) : root_(root) {}

    void check(const json& s, const json& v, const std::string& at) {
        if (s.is_boolean()) {
            if (!s.get<bool>()) fail(at, "not allowed");
            return;
        }
        if (auto ref = s.find("$ref"); ref != s.end()) {
            check(resolve(ref->get<std::string>()), v, at);
            return;
        }
        if (auto t = s.find("type"); t != s.end()) {
            bool ok = false;
            if (t->is_array()) {
                for (const auto& each : *t) ok |= has_type(v, each.get<std::string>());
            } else {
                ok = has_type(v, t->get<std::string>());
            }
            if (!ok) {
                fail(at, "expected type " + t->dump() + ", got " + std::string(v.type_name()));
                return;
            }
        }
        if (auto e = s.find("enum"); e != s.end()) {
            bool found = false;
            for (const auto& option : *e) found |= option == v;
            if (!found) fail(at, "value " + v.dump() + " not in " + e->dump());
        }
        if (v.is_number()) {
            const double d = v.get<double>();
            if (auto m = s.find("minimum"); m != s.end() && d < m->get<double>()) {
                fail(at, "value " + v.dump() + " below minimum " + m->dump());
            }
            if (auto m = s.find("maximum"); m != s.end() && d > m->get<double>()) {
                fail(at, "value " + v.dump() + " above maximum " + m->dump());
            }
        }
        if (v.is_string()) {
            const auto& str = v.get_ref<const std::string&>();
            if (auto m = s.find("minLength"); m != s.end() && str.size() < m->get<std::size_t>()) {
                fail(at, "string shorter than " + m->dump());
            }
            if (auto p = s.find("pattern"); p != s.end() && !std::regex_search(str, pattern(p->get<std::string>()))) {
                fail(at, "string " + v.dump() + " does not match " + p->dump());
            }
        }
        if (v.is_array()) {
            if (auto m = s.find("minItems"); m != s.end() && v.size() < m->get<std::size_t>()) {
                fail(at, "fewer than " + m->dump() + " items");
            }
            if (auto m = s.find("maxItems"); m != s.end() && v.size() > m->get<std::size_t>()) {
                fail(at, "more than " + m->dump() + " items");
            }
            if (auto items = s.find("items"); items != s.end()) {
                for (std::size_t i = 0; i < v.size(); ++i) check(*items, v[i], at + "/" + std::to_string(i));
            }
        }
        if (v.is_object()) {
            if (auto req = s.find("required"); req != s.end()) {
                for (const auto& name : *req) {
                    if (!v.contains(name.get<std::string>())) fail(at, "missing required property " + name.dump());
                }
            }
            const auto props = s.find("properties");
            const auto extra = s.find("additionalProperties");
            for (const auto& [key, value] : v.items()) {
                const auto child = at + "/" + key;
                if (props != s.end() && props->contains(key)) {
                    check(props->at(key), value, child);
                } else if (extra != s.end()) {
                    if (extra->is_boolean() && !extra->get<bool>()) {
                        fail(at, "unexpected property \"" + key + "\"");
                    } else {
                        check(*extra, value, child);
                    }
                }
            }
        }
    }

    std::vector<std::string> errors;

  private:
    void fail(const std::string& at, const std::string& message) {
        errors.push_back((at.empty() ? "/" : at) + ": " + message);
    }

    const json& resolve(const std::string& ref) {
        const std::string prefix = "#/definitions/";
        if (ref.rfind(prefix, 0) != 0) throw Error("unsupported schema reference " + ref);
        const auto& defs = root_.at("definitions");
        auto it = defs.find(ref.substr(prefix.size()));
        if (it == defs.end()) throw Error("unresolved schema reference " + ref);
        return *it;
    }

    const std::regex& pattern(const std::string& source) {
        auto it = patterns_.find(source);
        if (it == patterns_.end()) it = patterns_.emplace(source, std::regex(source, std::regex::ECMAScript)).first;
        return it->second;
    }

    const json& root_;
    std::map<std::string, std::regex> patterns_;
};

const std::map<std::string, json, std::less<>>& registry() {
    static const auto schemas = [] {
        std::map<std::string, json, std::less<>> out;
        for (std::size_t i = 0; i < detail::kSchemaCount; ++i) {
            const auto& [name, body] = detail::kSchemaSources[i];
            out.emplace(std::string(name), json::parse(body));
        }
        return out;
    }();
    return schemas;
}

}  // namespace

std::vector<std::string> schema_errors(const json& schema_doc, const json& doc) {
    Validator v(schema_doc);
    v.check(schema_doc, doc, "");
    return std::move(v.errors);
}

const json& schema(std::string_view name) {
    const auto& all = registry();
    auto it = all.find(name);
    if (it == all.end()) throw Error("unknown schema '" + std::string(name) + "'");
    return it->second;
}

std::vector<std::string> schema_names() {
    std::vector<std::string> out;
    for (const auto& [name, body] : registry()) out.push_back(name);
    return out;
}

void require_schema(std::string_view name, const json& doc, const std::string& what) {
    const auto errors = schema_errors(schema(name), doc);
    if (errors.empty()) return;
    std::string message = what + " does not match the " + std::string(name) + " schema: " + errors.front();
    if (errors.size() > 1) message += " (and " + std::to_string(errors.size() - 1) + " more)";
    throw Error(message);
}

}  // namespace cmap
