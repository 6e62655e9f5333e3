#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <unordered_map>
#include <vector>

#include "mktsim/market.hpp"

namespace mktsim {

using OrderId = std::uint64_t;
using Ticks = std::int64_t;

struct RestingOrder {
  OrderId id = 0;
  AgentId owner = kEcnId;
  double qty = 0.0;
  std::uint64_t seq = 0;
};

struct Fill {
  OrderId maker_order = 0;
  AgentId maker = kEcnId;
  AgentId taker = kEcnId;
  Side aggressor_side = Side::buy;
  double price = 0.0;
  double qty = 0.0;
};

struct LimitResult {
  OrderId order_id = 0;
  std::vector<Fill> fills;
  double rested_qty = 0.0;
};

struct MarketResult {
  std::vector<Fill> fills;
  double requested = 0.0;
  double executed = 0.0;
  std::optional<double> vwap;  // empty when nothing executed

  double unfilled() const noexcept { return requested - executed; }
};

/// Volumes of the n tick levels nearest the mid on each side. Level k on
/// the bid side is the k-th tick price strictly below the mid, and likewise
/// above it for the ask side, so empty levels inside the book show as 0.
struct BookSnapshot {
  double mid = 0.0;
  std::vector<double> bid_volumes;
  std::vector<double> ask_volumes;

  std::size_t levels() const noexcept { return bid_volumes.size(); }
  /// [bid_1..bid_n, ask_1..ask_n]
  std::vector<double> as_vector() const;
};

/// Price-time priority limit order book of FIFO queues on a tick grid.
class OrderBook {
public:
  explicit OrderBook(double tick_size = 0.01);

  double tick_size() const noexcept { return tick_; }

  /// Converts an on-grid price to ticks; throws InvalidPrice otherwise.
  Ticks to_ticks(double price) const;
  double to_price(Ticks t) const noexcept { return static_cast<double>(t) * tick_; }

  bool has_bids() const noexcept { return !bids_.empty(); }
  bool has_asks() const noexcept { return !asks_.empty(); }

  double best_bid() const;
  double best_ask() const;
  Ticks best_bid_ticks() const;
  Ticks best_ask_ticks() const;

  /// Throws EmptySide when either side is empty.
  ReferencePrices mid_and_spreads() const;

  /// Adds a limit order on the buy (bid) or sell (ask) side, crossing it
  /// first against the opposite side in price-then-FIFO order.
  LimitResult submit_limit(Side side, double price, double qty, AgentId owner);
  LimitResult submit_limit_ticks(Side side, Ticks price, double qty, AgentId owner);

  /// Walks the opposite side best price first; partial fills are allowed.
  MarketResult submit_market(Side side, double qty, AgentId owner);

  /// Removes a resting order and returns its remaining quantity.
  double cancel(OrderId id);

  /// Reduces a resting order by up to qty; removes it when exhausted.
  /// Returns the quantity actually removed.
  double reduce(OrderId id, double qty);

  /// Hypothetical market order: (executable qty, VWAP) without mutating.
  std::pair<double, std::optional<double>> probe_market(Side side, double qty) const;

  double volume_at(Side book_side, Ticks price) const;
  double total_volume(Side book_side) const;
  std::size_t order_count() const noexcept { return index_.size(); }

  /// Orders resting at a level, oldest first (empty when none).
  const std::deque<RestingOrder>* queue_at(Side book_side, Ticks price) const;

  /// Tick price of snapshot level k (1-based) for the current mid.
  Ticks level_ticks(Side book_side, int k) const;

  BookSnapshot snapshot(int n) const;

  /// Every resting order as (book side, price ticks, order), bids first by
  /// descending price then asks by ascending price, FIFO within a level.
  template <class Fn> void for_each_order(Fn&& fn) const {
    for (const auto& [p, q] : bids_)
      for (const auto& o : q) fn(Side::buy, p, o);
    for (const auto& [p, q] : asks_)
      for (const auto& o : q) fn(Side::sell, p, o);
  }

private:
  using BidMap = std::map<Ticks, std::deque<RestingOrder>, std::greater<>>;
  using AskMap = std::map<Ticks, std::deque<RestingOrder>, std::less<>>;

  template <class Map>
  void match(Map& opposite, Side aggressor, std::optional<Ticks> limit, double& qty, AgentId owner,
             std::vector<Fill>& fills);

  double tick_;
  BidMap bids_;
  AskMap asks_;
  std::unordered_map<OrderId, std::pair<Side, Ticks>> index_;
  OrderId next_id_ = 1;
  std::uint64_t seq_ = 0;
};

} // namespace mktsim
