#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace verbatim {

struct PluginParam {
  std::string name;
  std::string type;  // "str" | "int" | "float" | "bool"
  std::optional<std::string> default_value;  // rendered literal
};

// Orchestrator-side view of a kernel plugin. The implementation lives in the
// kernel and is located through `module`.
struct PluginDescriptor {
  std::string name;
  std::vector<PluginParam> signature;
  std::string doc;
  std::string demo;
  std::string artifact_kind = "image";
  std::string module;

  // name(p: type = default, ...) -> artifact_kind
  [[nodiscard]] std::string render_signature() const;
  // Throws InvalidArgument on an empty name or an unnamed/untyped parameter.
  void validate() const;
};

// Manifest document: {"plugins": [{name, signature, doc, demo,
// artifact_kind, module}, ...]}.
std::vector<PluginDescriptor> load_plugin_manifest(const std::filesystem::path& path);
std::string plugin_manifest_json(const std::vector<PluginDescriptor>& plugins);
void write_plugin_manifest(const std::filesystem::path& path,
                           const std::vector<PluginDescriptor>& plugins);

// issue_river and word_cloud, resolved by the stub kernel.
std::vector<PluginDescriptor> builtin_plugins();

}  // namespace verbatim
