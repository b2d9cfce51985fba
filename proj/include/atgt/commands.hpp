#pragma once

#include <string>

namespace atgt::commands {

// Each command receives the resolved configuration as a JSON object in text
// form. The caller (the CLI front end) is responsible for merging the config
// file with explicit flag overrides before calling in; flag values win.
//
// Commands throw atgt::Error subclasses on failure. The front end maps those
// to exit codes and a machine-readable error record on stderr.
void cmd_modify_image(const std::string& config_json);
void cmd_modify_text(const std::string& config_json);
void cmd_train_ref(const std::string& config_json);
void cmd_attribute(const std::string& config_json);
void cmd_evaluate(const std::string& config_json);
void cmd_significance(const std::string& config_json);
void cmd_envelope(const std::string& config_json);
void cmd_sweep(const std::string& config_json);

}  // namespace atgt::commands
