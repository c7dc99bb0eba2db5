class Config {
  static defaults;
  static {
    Config.defaults = { load: () => ({}) };
  }
  static from(obj) { return Object.assign(new Config(), obj); }
}
