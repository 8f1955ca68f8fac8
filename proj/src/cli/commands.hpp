#pragma once

#include <string>
#include <vector>

#include "cli/config.hpp"
#include "data/image.hpp"

namespace sfd {

// Row-major grid of equally sized images with a 2-pixel black frame between
// cells and around the outside, so one image comes back as itself plus a
// border. `cols` caps the number of columns.
Image make_image_grid(const std::vector<Image>& images, int cols);
void emit_image_grid(const std::vector<Image>& images, int cols, const std::string& path);

// Dispatch one subcommand. Every command writes its artifacts under the
// config's output directory plus a manifest JSON (command, config hash, wall
// time). Returns a process exit status: 0 success, 1 internal/validation
// error, 2 usage or missing prerequisite.
int run_command(const std::string& name, const RunConfig& cfg);

}  // namespace sfd
