#include "verbatim/plugin.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "verbatim/error.hpp"

namespace verbatim {

using nlohmann::json;

std::string PluginDescriptor::render_signature() const {
  std::ostringstream out;
  out << name << "(";
  for (std::size_t i = 0; i < signature.size(); ++i) {
    if (i > 0) out << ", ";
    out << signature[i].name << ": " << signature[i].type;
    if (signature[i].default_value) out << " = " << *signature[i].default_value;
  }
  out << ") -> " << artifact_kind;
  return out.str();
}

void PluginDescriptor::validate() const {
  if (name.empty()) throw Error(Errc::InvalidArgument, "plugin without a name");
  static const std::set<std::string> kTypes = {"str", "int", "float", "bool"};
  std::set<std::string> seen;
  for (const auto& p : signature) {
    if (p.name.empty() || kTypes.count(p.type) == 0) {
      throw Error(Errc::InvalidArgument,
                  "plugin " + name + ": parameters must be named and typed");
    }
    if (!seen.insert(p.name).second) {
      throw Error(Errc::InvalidArgument, "plugin " + name + ": duplicate parameter " + p.name);
    }
  }
}

namespace {

json to_json(const PluginDescriptor& d) {
  json params = json::array();
  for (const auto& p : d.signature) {
    json jp = {{"name", p.name}, {"type", p.type}};
    if (p.default_value) jp["default"] = *p.default_value;
    params.push_back(jp);
  }
  return {{"name", d.name},       {"signature", params},
          {"doc", d.doc},         {"demo", d.demo},
          {"artifact_kind", d.artifact_kind}, {"module", d.module}};
}

PluginDescriptor from_json(const json& j) {
  PluginDescriptor d;
  d.name = j.at("name").get<std::string>();
  for (const auto& p : j.value("signature", json::array())) {
    PluginParam param{p.at("name").get<std::string>(), p.at("type").get<std::string>(), {}};
    if (p.contains("default")) param.default_value = p.at("default").get<std::string>();
    d.signature.push_back(std::move(param));
  }
  d.doc = j.value("doc", std::string());
  d.demo = j.value("demo", std::string());
  d.artifact_kind = j.value("artifact_kind", std::string("image"));
  d.module = j.value("module", std::string());
  d.validate();
  return d;
}

}  // namespace

std::vector<PluginDescriptor> load_plugin_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::PluginLoadError, "cannot read manifest " + path.string());
  std::vector<PluginDescriptor> out;
  try {
    const json doc = json::parse(in);
    for (const auto& p : doc.at("plugins")) {
      PluginDescriptor d = from_json(p);
      for (const auto& seen : out) {
        if (seen.name == d.name) {
          throw Error(Errc::DuplicatePlugin, path.string() + ": plugin '" + d.name + "' listed twice");
        }
      }
      out.push_back(std::move(d));
    }
  } catch (const json::exception& e) {
    throw Error(Errc::PluginLoadError, path.string() + ": " + e.what());
  }
  return out;
}

std::string plugin_manifest_json(const std::vector<PluginDescriptor>& plugins) {
  json list = json::array();
  for (const auto& p : plugins) list.push_back(to_json(p));
  return json{{"plugins", list}}.dump(2);
}

void write_plugin_manifest(const std::filesystem::path& path,
                           const std::vector<PluginDescriptor>& plugins) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::Io, "cannot write " + path.string());
  out << plugin_manifest_json(plugins) << "\n";
}

std::vector<PluginDescriptor> builtin_plugins() {
  PluginDescriptor river;
  river.name = "issue_river";
  river.signature = {{"topic_column", "str", "\"topics\""},
                     {"time_column", "str", "\"timestamp\""},
                     {"top_n", "int", "5"}};
  river.doc =
      "Draws an issue river: a stacked chart of how often the top_n most frequent "
      "topics occur per month in the loaded table df. Saves an SVG image.";
  river.demo = "issue_river(\"topics\", \"timestamp\", 5)  # -> image artifact";
  river.artifact_kind = "image";
  river.module = "verbatim_plugins.issue_river";

  PluginDescriptor cloud;
  cloud.name = "word_cloud";
  cloud.signature = {{"text_column", "str", "\"text\""}};
  cloud.doc =
      "Renders the most frequent non-stopword terms of a text column of df as a "
      "word cloud, sized by frequency. Saves an SVG image.";
  cloud.demo = "word_cloud(\"text\")  # -> image artifact";
  cloud.artifact_kind = "image";
  cloud.module = "verbatim_plugins.word_cloud";
  return {river, cloud};
}

}  // namespace verbatim
