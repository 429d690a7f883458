#pragma once
// Immutable eventuality graph: dense node table, interned discourse
// relations, and CSR adjacency in both directions.
//
// Edges are kept once, sorted by (src, rel, dst); that array doubles as the
// outgoing adjacency. Incoming adjacency is an index array into it sorted by
// (dst, rel, src).

#include <cstddef>
#include <cstdint>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace narrground {

using NodeId = std::uint32_t;
using RelationId = std::uint32_t;

struct EventualityNode {
  NodeId id = 0;
  std::string text;
  std::uint64_t freq = 0;

  bool operator==(const EventualityNode&) const = default;
};

struct TypedEdge {
  NodeId src = 0;
  RelationId rel = 0;
  NodeId dst = 0;
  double weight = 1.0;

  bool operator==(const TypedEdge&) const = default;
};

// Append-only string interner, frozen once the owning store is built.
class RelationTable {
 public:
  RelationId intern(std::string_view name);
  std::optional<RelationId> find(std::string_view name) const;
  const std::string& name(RelationId id) const;
  std::size_t size() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

  bool operator==(const RelationTable& other) const {
    return names_ == other.names_;
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, RelationId> ids_;
};

enum class Direction { kOut, kIn };

struct Neighbor {
  const TypedEdge* edge;
  NodeId node;
};

// Lightweight view over one node's adjacency in either direction.
class NeighborRange {
 public:
  class iterator {
   public:
    using iterator_category = std::random_access_iterator_tag;
    using value_type = Neighbor;
    using difference_type = std::ptrdiff_t;
    using reference = Neighbor;
    using pointer = void;

    iterator() = default;
    iterator(const TypedEdge* edges, const std::uint32_t* index,
             std::size_t pos, Direction dir)
        : edges_(edges), index_(index), pos_(pos), dir_(dir) {}

    Neighbor operator*() const {
      const TypedEdge* e =
          dir_ == Direction::kOut ? edges_ + pos_ : edges_ + index_[pos_];
      return {e, dir_ == Direction::kOut ? e->dst : e->src};
    }
    Neighbor operator[](difference_type n) const { return *(*this + n); }
    iterator& operator++() { ++pos_; return *this; }
    iterator operator++(int) { auto t = *this; ++pos_; return t; }
    iterator& operator--() { --pos_; return *this; }
    iterator operator--(int) { auto t = *this; --pos_; return t; }
    iterator& operator+=(difference_type n) { pos_ += n; return *this; }
    iterator& operator-=(difference_type n) { pos_ -= n; return *this; }
    friend iterator operator+(iterator it, difference_type n) { return it += n; }
    friend iterator operator+(difference_type n, iterator it) { return it += n; }
    friend iterator operator-(iterator it, difference_type n) { return it -= n; }
    friend difference_type operator-(const iterator& a, const iterator& b) {
      return static_cast<difference_type>(a.pos_) -
             static_cast<difference_type>(b.pos_);
    }
    friend bool operator==(const iterator& a, const iterator& b) {
      return a.pos_ == b.pos_;
    }
    friend auto operator<=>(const iterator& a, const iterator& b) {
      return a.pos_ <=> b.pos_;
    }

   private:
    const TypedEdge* edges_ = nullptr;
    const std::uint32_t* index_ = nullptr;
    std::size_t pos_ = 0;
    Direction dir_ = Direction::kOut;
  };

  NeighborRange(const TypedEdge* edges, const std::uint32_t* index,
                std::size_t begin, std::size_t end, Direction dir)
      : edges_(edges), index_(index), begin_(begin), end_(end), dir_(dir) {}

  iterator begin() const { return {edges_, index_, begin_, dir_}; }
  iterator end() const { return {edges_, index_, end_, dir_}; }
  std::size_t size() const { return end_ - begin_; }
  bool empty() const { return begin_ == end_; }

 private:
  const TypedEdge* edges_;
  const std::uint32_t* index_;
  std::size_t begin_;
  std::size_t end_;
  Direction dir_;
};

class KgStore {
 public:
  KgStore() = default;

  // Builds a store from in-memory parts. Node ids must be dense 0..N-1
  // (in any order); duplicate (src, rel, dst) rows are merged with their
  // weights summed. Throws FormatError on violations.
  static KgStore build(std::vector<EventualityNode> nodes,
                       RelationTable relations, std::vector<TypedEdge> edges);

  // Reads the line-delimited nodes file and the tab-separated edges file.
  static KgStore load(const std::string& nodes_path,
                      const std::string& edges_path);

  std::string snapshot() const;
  static KgStore restore(std::string_view blob);

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_.size(); }

  const EventualityNode& node(NodeId id) const;
  bool contains(NodeId id) const { return id < nodes_.size(); }
  std::span<const EventualityNode> nodes() const { return nodes_; }
  // All edges sorted by (src, rel, dst).
  std::span<const TypedEdge> edges() const { return edges_; }
  const RelationTable& relations() const { return relations_; }

  // Sorted by (rel, neighbor id). Throws InvariantError on unknown node.
  NeighborRange neighbors(NodeId node, Direction direction) const;

  bool operator==(const KgStore& other) const {
    return nodes_ == other.nodes_ && relations_ == other.relations_ &&
           edges_ == other.edges_;
  }

 private:
  void index_adjacency();

  std::vector<EventualityNode> nodes_;
  RelationTable relations_;
  std::vector<TypedEdge> edges_;
  std::vector<std::uint64_t> out_offsets_;
  std::vector<std::uint64_t> in_offsets_;
  std::vector<std::uint32_t> in_index_;
};

}  // namespace narrground
