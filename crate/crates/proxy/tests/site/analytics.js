var Analytics = {
  queue: [],
  track: function (name, props) {
    this.queue.push({ name: name, props: props || {}, at: Date.now() });
  },
  flush: function (send) {
    var batch = this.queue.splice(0, this.queue.length);
    if (batch.length) send(JSON.stringify(batch));
    return batch.length;
  },
  sample: function (rate, seed) {
    var x = Math.sin(seed || 1) * 10000;
    return x - Math.floor(x) < rate;
  },
  fingerprintScreen: function () {
    var s = typeof screen !== "undefined" ? screen : { width: 0, height: 0, colorDepth: 0 };
    return [s.width, s.height, s.colorDepth].join("x");
  },
  sessionId: function () {
    var chars = "abcdefghijklmnopqrstuvwxyz0123456789";
    var id = "";
    for (var i = 0; i < 16; i++) id += chars.charAt(Math.floor(Math.random() * chars.length));
    return id;
  },
  timing: function (perf) {
    var t = perf && perf.timing ? perf.timing : null;
    if (!t) return null;
    return {
      dns: t.domainLookupEnd - t.domainLookupStart,
      connect: t.connectEnd - t.connectStart,
      ttfb: t.responseStart - t.requestStart,
      domReady: t.domContentLoadedEventEnd - t.navigationStart,
      load: t.loadEventEnd - t.navigationStart,
    };
  },
  consent: function (storage) {
    var raw = storage && storage.getItem ? storage.getItem("consent") : null;
    if (!raw) return { analytics: false, ads: false };
    try {
      var parsed = JSON.parse(raw);
      return { analytics: !!parsed.analytics, ads: !!parsed.ads };
    } catch (e) {
      return { analytics: false, ads: false };
    }
  },
  ecommerce: function (order) {
    var lines = [];
    var revenue = 0;
    for (var i = 0; i < order.items.length; i++) {
      var it = order.items[i];
      var line = {
        item_id: it.sku,
        item_name: it.name || it.sku,
        price: (it.price / 100).toFixed(2),
        quantity: it.qty,
        item_category: it.category || "uncategorized",
        discount: it.discount ? (it.discount / 100).toFixed(2) : undefined,
      };
      revenue += it.price * it.qty - (it.discount || 0);
      lines.push(line);
    }
    this.track("purchase", {
      transaction_id: order.id,
      value: (revenue / 100).toFixed(2),
      currency: order.currency || "USD",
      shipping: ((order.shipping || 0) / 100).toFixed(2),
      tax: ((order.tax || 0) / 100).toFixed(2),
      coupon: order.coupon || null,
      items: lines,
    });
    return revenue;
  },
  heatmap: function (events, width, height, cell) {
    var cols = Math.ceil(width / cell), rows = Math.ceil(height / cell);
    var grid = new Array(cols * rows).fill(0);
    for (var i = 0; i < events.length; i++) {
      var e = events[i];
      if (e.x < 0 || e.y < 0 || e.x >= width || e.y >= height) continue;
      grid[Math.floor(e.y / cell) * cols + Math.floor(e.x / cell)] += 1;
    }
    var max = Math.max.apply(null, grid) || 1;
    return grid.map(function (v) { return Math.round((v / max) * 255); });
  },
};
