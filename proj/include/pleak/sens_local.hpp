#pragma once

#include <string>

#include "pleak/sql.hpp"

namespace pleak::sensderiv {

// Instance-dependent COUNT sensitivity w.r.t. one table: the larger of the
// worst single-row removal effect (exact) and a bound on what one added row
// could join with, divided by the row add/remove cost G.
double local_row_sensitivity(const sql::SelectQuery &query, const sql::Database &db,
                             const std::string &table, const sql::FuncMap &funcs,
                             double G = 1.0);

// Concrete row count of a COUNT-style query (plain SELECT or COUNT(*)).
long count_rows(const sql::SelectQuery &query, const sql::Database &db,
                const sql::FuncMap &funcs);

} // namespace pleak::sensderiv
