#ifndef LONGIT_IO_HPP
#define LONGIT_IO_HPP

#include <string>

#include "longit/data.hpp"

namespace longit {

// Long-format CSV: subject_id, visit_index, time, y, r, s, then one column
// per baseline covariate. Missing r/s cells are left empty. Dataset-level
// tau and time_unit live in a JSON sidecar next to the CSV.
void write_dataset_csv(const LongitudinalDataset& ds, const std::string& csv_path,
                       const std::string& sidecar_path);

[[nodiscard]] LongitudinalDataset read_dataset_csv(const std::string& csv_path,
                                                   const std::string& sidecar_path);

}  // namespace longit

#endif
