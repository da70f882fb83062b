#pragma once

#include <string>

#include "fvb/calibrate.hpp"

namespace fvb {

// Binary container for calibration tables. Doubles are stored bit for bit, so
// a loaded table reproduces interval endpoints exactly.
enum class TableModel { Gmm, Bmlr };

void save_table(const std::string& path, const GmmTable& table);
void save_table(const std::string& path, const BmlrTable& table);

TableModel peek_table_model(const std::string& path);

GmmTable load_gmm_table(const std::string& path);
BmlrTable load_bmlr_table(const std::string& path);

}  // namespace fvb
