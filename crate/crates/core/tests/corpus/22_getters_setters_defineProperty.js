var target = {};
Object.defineProperty(target, "value", {
  get: function () { return this._v; },
  set: function (v) { this._v = v; },
  enumerable: true
});
var literal = {
  get computed() { return 1 + 1; },
  set computed(v) {},
  get ["dyn" + "amic"]() { return "d"; }
};
