function outer() {
  const self = () => this;
  const args = () => arguments.length;
  return [self(), args()];
}
const obj = {
  v: 5,
  m() { return [1, 2].map(x => x * this.v); }
};
