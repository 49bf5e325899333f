#pragma once

// Miniature in-memory relational engine over the canonical SQL subset.

#include "ormlens/relational.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace ormlens {

struct ColumnSourceFinding;

struct Row {
    std::vector<Value> cells; // cells[0] is id
    std::uint64_t version = 0;
    friend bool operator==(const Row&, const Row&) = default;
};

struct Table {
    std::string name;
    std::string model;
    std::vector<std::string> columns; // columns[0] is "id"
    std::vector<Row> rows;            // ascending id
    std::int64_t nextId = 1;

    int column_index(std::string_view column) const;
    const Row* find(std::int64_t id) const;
    Row* find(std::int64_t id);
    friend bool operator==(const Table&, const Table&) = default;
};

struct TableStore {
    std::map<std::string, Table> tables;
    std::map<std::string, RelQuery> views;

    const Table* table(std::string_view name) const;
    Table* table(std::string_view name);
    std::size_t row_count() const;
    friend bool operator==(const TableStore&, const TableStore&) = default;
};

/// One empty table per model.
TableStore empty_store(const AppIR& ir);

/// Deterministic synthetic data. Foreign keys are uniform over the parent's ids; columns
/// classified onlyConst in `columns` draw from their constant domain.
TableStore generate_data(const AppIR& ir, std::uint64_t seed, int rowsPerModel,
                         const std::vector<ColumnSourceFinding>* columns = nullptr);

void add_view(TableStore& store, const ViewDef& view);

struct RowIdentity {
    std::string table;
    std::int64_t id = 0;
    std::uint64_t version = 0;
    int source = 0; // index into the query's sources
    friend auto operator<=>(const RowIdentity&, const RowIdentity&) = default;
    friend bool operator==(const RowIdentity&, const RowIdentity&) = default;
};

struct ResultColumn {
    int source = 0;
    std::string column;
    std::string name; // output name
    friend bool operator==(const ResultColumn&, const ResultColumn&) = default;
};

struct ResultSet {
    bool scalar = false;
    Value value; // COUNT as an integer, ANY as a boolean
    std::vector<ResultColumn> columns;
    std::vector<std::vector<Value>> rows;
    std::vector<std::vector<RowIdentity>> identities;  // per row: every contributing base row
    std::vector<std::vector<std::string>> sourceColumns; // per source: columns retrieved
    friend bool operator==(const ResultSet&, const ResultSet&) = default;
};

/// Throws UnboundParameter for an operand without a value and UnknownColumn for unknown
/// tables or columns.
ResultSet execute(const TableStore& store, const RelQuery& q);

/// Insert or update; returns the affected rows after the write.
std::vector<RowIdentity> execute_write(TableStore& store, const RelQuery& q);

ResultSet execute_query(const TableStore& store, const AppIR& ir, const QueryDescriptor& q,
                        const QueryBindings& bindings);

} // namespace ormlens
